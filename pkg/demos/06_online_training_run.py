"""A miniature end-to-end run: demos, online learning, evaluation, logs.

Uses a heavily shortened budget so it finishes in well under a minute;
real experiments use the presets (150k steps). The run directory this
produces is exactly what the `myoe-plot` report tool consumes.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from myoe.config import preset
from myoe.harness import evaluate, train

cfg = preset("point-reach-noisy")
cfg.train.total_env_steps = 4000
cfg.train.eval_every = 2000
cfg.train.eval_episodes = 3
cfg.train.checkpoint_every = 0
cfg.seed = 0
cfg.out_dir = str(Path(tempfile.mkdtemp()) / "demo-run")

out = train(cfg)
print("run directory:", out)
for p in sorted(out.iterdir()):
    print("  ", p.name)

records = [json.loads(l) for l in (out / "metrics.ndjson").read_text().splitlines()]
kinds = {}
for r in records:
    kinds[r["kind"]] = kinds.get(r["kind"], 0) + 1
print("\nlog record counts:", kinds)
print("header:", {k: v for k, v in records[0].items() if k != "wall_clock"})

summary = evaluate(out / "checkpoint_final.bin", episodes=10, seed=1)
print(f"\ngreedy evaluation over 10 episodes: {summary.format()}"
      f"  (mean length {summary.mean_length:.1f})")
print("\n(for plots: npx myoe-plot --logs '<run>/metrics.ndjson' --out report/)")
