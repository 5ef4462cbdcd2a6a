"""Training and evaluation orchestration.

One trial is strictly sequential: collect a step, maybe update, maybe
evaluate, repeat. All randomness flows from a single root seed through
labeled streams, so a rerun with the same config reproduces the metrics
log record for record. Every run directory contains the serialized
config, the demonstration file, an NDJSON metrics log, and checkpoints.

Multiple trials are independent processes; ``train_many`` fans out over
them bounded by the MYOE_THREADS environment variable.
"""

from __future__ import annotations

import json
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import MyoeAgent
from .baselines import build_baseline
from .checkpoint import load_parameters, save_parameters
from .config import RunConfig, load_config, save_config
from .envs import make_env, generate_demonstrations
from .optim import NonFiniteGradError
from .replay import EpisodeRecord, ReplayBuffer, load_demonstrations, save_demonstrations

FINAL_CHECKPOINT = "checkpoint_final.bin"


class NumericFailure(RuntimeError):
    """Too many consecutive rejected optimizer steps; training aborted."""


def derive_int(seed, label):
    """Stable 32-bit stream seed from (root seed, label)."""
    return int(
        np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]).generate_state(1)[0]
    )


def stream(seed, label):
    """Labeled random stream split off the root seed."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), zlib.crc32(label.encode())])
    )


class MetricsLogger:
    """NDJSON writer with a monotone step counter."""

    def __init__(self, path, schema):
        self._f = open(path, "w", encoding="utf-8")
        self.schema = schema
        self._last_step = -1

    def log(self, kind, step, **fields):
        if step < self._last_step:
            raise ValueError(f"step counter went backwards: {step} < {self._last_step}")
        self._last_step = step
        record = {"kind": kind, "step": int(step), "wall_clock": time.time()}
        record.update(fields)
        self._f.write(json.dumps(record) + "\n")

    def close(self):
        self._f.close()


def success_weighted_return(success, length, horizon):
    """Episode return discounted by how much of the horizon it burned."""
    return (1.0 if success else 0.0) * (horizon - length) / horizon


def build_agent(cfg: RunConfig, env_spec, rng):
    if cfg.agent == "myoe":
        return MyoeAgent(env_spec, cfg.model, cfg.behavior, cfg.train, rng)
    probe = MyoeAgent(
        env_spec, cfg.model, cfg.behavior, cfg.train, np.random.default_rng(0)
    )
    target = probe.parameter_count()
    return build_baseline(
        cfg.agent, env_spec, cfg.baseline, cfg.train, rng,
        target_count=target, gamma=cfg.behavior.gamma, lam=cfg.behavior.lam,
    )


def _make_run_env(cfg: RunConfig, seed):
    return make_env(
        cfg.env.name, seed,
        action_noise=cfg.env.action_noise,
        goal_random=cfg.env.goal_random,
        pixels=cfg.env.pixels,
    )


def _load_or_generate_demos(cfg: RunConfig, out_dir: Path):
    if cfg.train.demo_path:
        _, demos = load_demonstrations(cfg.train.demo_path)
        return demos
    demo_env = _make_run_env(cfg, derive_int(cfg.seed, "demo"))
    demos = generate_demonstrations(
        demo_env, cfg.train.demo_episodes, cfg.train.demo_perturbation
    )
    save_demonstrations(
        out_dir / "demos.ndjson", demos, env_name=cfg.env.name,
        perturbation=cfg.train.demo_perturbation,
    )
    return demos


def train(cfg: RunConfig) -> Path:
    """Run one trial end to end; returns the run directory."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.json", cfg)
    env = _make_run_env(cfg, derive_int(cfg.seed, "env"))
    agent = build_agent(cfg, env.spec, stream(cfg.seed, "init"))
    collect_rng = stream(cfg.seed, "collect")
    update_rng = stream(cfg.seed, "update")
    logger = MetricsLogger(out / "metrics.ndjson", cfg.log_schema)
    logger.log(
        "header", 0,
        schema=cfg.log_schema, agent=cfg.agent, env=cfg.env.name, seed=cfg.seed,
        parameters=agent.parameter_count(),
    )

    buffer = ReplayBuffer(cfg.train.buffer_capacity)
    for rec in _load_or_generate_demos(cfg, out):
        buffer.append(rec)
        logger.log(
            "demo_episode", 0,
            episode_return=float(rec.rewards.sum()), length=rec.length,
            success=bool(rec.success),
            success_weighted_return=success_weighted_return(
                rec.success, rec.length, env.spec.horizon
            ),
        )

    try:
        _train_loop(cfg, env, agent, buffer, collect_rng, update_rng, logger)
        save_parameters(out / FINAL_CHECKPOINT, agent.pset)
    finally:
        logger.close()
    return out


def _train_loop(cfg, env, agent, buffer, collect_rng, update_rng, logger):
    tc = cfg.train
    step = 0
    nan_strikes = 0
    eval_round = 0
    obs = env.reset()
    agent.begin_episode()
    ep = _EpisodeTape(obs, env.goal_raw)
    while step < tc.total_env_steps:
        action, _info = agent.act(obs.vector(), env.goal_raw, collect_rng, explore=True)
        result = env.step(action)
        step += 1
        agent.observe(
            obs.vector(), action, result.reward, result.done,
            result.observation.vector(),
        )
        ep.push(result, action)
        if result.done:
            buffer.append(ep.record(env))
            logger.log(
                "train_episode", step,
                episode_return=ep.episode_return, length=ep.length, success=ep.success,
                success_weighted_return=success_weighted_return(
                    ep.success, ep.length, env.spec.horizon
                ),
            )
            obs = env.reset()
            agent.begin_episode()
            ep = _EpisodeTape(obs, env.goal_raw)
        else:
            obs = result.observation

        if step % tc.train_every == 0 and len(buffer) > 0:
            try:
                metrics = agent.update(buffer, update_rng)
                nan_strikes = 0
                if metrics:
                    logger.log("train_step", step, **metrics)
            except NonFiniteGradError as exc:
                nan_strikes += 1
                logger.log("train_step", step, rejected=1, tensor=exc.tensor_name)
                if nan_strikes > tc.nan_tolerance:
                    raise NumericFailure(
                        f"{nan_strikes} consecutive non-finite gradient steps "
                        f"(last: {exc.tensor_name})"
                    ) from exc

        if tc.eval_every and step % tc.eval_every == 0:
            eval_round += 1
            eval_env = _make_run_env(cfg, derive_int(cfg.seed, f"eval{eval_round}"))
            evaluate_agent(
                agent, eval_env, tc.eval_episodes,
                stream(cfg.seed, f"eval-rng{eval_round}"),
                logger=logger, step=step,
            )
        if tc.checkpoint_every and step % tc.checkpoint_every == 0:
            save_parameters(Path(cfg.out_dir) / f"checkpoint_{step}.bin", agent.pset)


class _EpisodeTape:
    """Accumulates one episode's arrays in the storage convention."""

    def __init__(self, first_obs, goal_raw):
        self.first = first_obs.vector()
        self.goal = np.asarray(goal_raw, dtype=np.float64)
        self.obs, self.act, self.rew, self.done = [], [], [], []
        self.success = False

    def push(self, result, action):
        self.obs.append(result.observation.vector())
        self.act.append(np.asarray(action, dtype=np.float64))
        self.rew.append(result.reward)
        self.done.append(result.done)
        self.success = self.success or result.success

    @property
    def length(self):
        return len(self.act)

    @property
    def episode_return(self):
        return float(sum(self.rew))

    def record(self, env) -> EpisodeRecord:
        return EpisodeRecord(
            env_name=env.spec.name,
            seed=env.seed,
            first_observation=self.first,
            observations=np.asarray(self.obs),
            actions=np.asarray(self.act),
            rewards=np.asarray(self.rew),
            dones=np.asarray(self.done, dtype=bool),
            success=self.success,
            expert=False,
            goal=self.goal,
        )


# -- evaluation -----------------------------------------------------------


@dataclass
class EvalSummary:
    episodes: int
    success_rate: float
    success_std: float
    mean_return: float
    mean_length: float
    mean_success_weighted_return: float

    def format(self):
        return format_mean_std(self.success_rate, self.success_std)


def format_mean_std(mean, std):
    return f"{mean:.2f} ± {std:.2f}"


def evaluate_agent(agent, env, episodes, rng, logger=None, step=0) -> EvalSummary:
    """Greedy-mean rollouts; never mutates agent parameters."""
    succ, rets, lens, swrs = [], [], [], []
    for _ in range(episodes):
        obs = env.reset()
        agent.begin_episode()
        done = False
        total = 0.0
        length = 0
        success = False
        ent_sum, ent_n = 0.0, 0
        while not done:
            action, info = agent.act(obs.vector(), env.goal_raw, rng, explore=False)
            result = env.step(action)
            total += result.reward
            success = success or result.success
            length += 1
            done = result.done
            obs = result.observation
            if "weight_entropy" in info:
                ent_sum += info["weight_entropy"]
                ent_n += 1
        swr = success_weighted_return(success, length, env.spec.horizon)
        succ.append(1.0 if success else 0.0)
        rets.append(total)
        lens.append(length)
        swrs.append(swr)
        if logger is not None:
            extra = {"weight_entropy": ent_sum / ent_n} if ent_n else {}
            logger.log(
                "eval_episode", step,
                episode_return=total, length=length, success=bool(success),
                success_weighted_return=swr, **extra,
            )
    succ = np.asarray(succ)
    return EvalSummary(
        episodes=episodes,
        success_rate=float(succ.mean()),
        success_std=float(succ.std()),
        mean_return=float(np.mean(rets)),
        mean_length=float(np.mean(lens)),
        mean_success_weighted_return=float(np.mean(swrs)),
    )


def evaluate(checkpoint_path, episodes=100, seed=0) -> EvalSummary:
    """Load a checkpoint (with its run config) and evaluate greedily."""
    ckpt = Path(checkpoint_path)
    cfg = load_config(ckpt.parent / "config.json")
    env = _make_run_env(cfg, derive_int(seed, "eval-env"))
    agent = build_agent(cfg, env.spec, stream(seed, "eval-init"))
    load_parameters(ckpt, agent.pset)
    return evaluate_agent(agent, env, episodes, stream(seed, "eval-act"))


class ExpertPolicy:
    """Wraps an environment's scripted controller in the agent interface."""

    def __init__(self, env):
        self.env = env

    def begin_episode(self):
        pass

    def act(self, obs_vec, goal_raw, rng, explore=True):
        return self.env.expert_action(), {}


class RandomPolicy:
    def __init__(self, spec):
        self.spec = spec

    def begin_episode(self):
        pass

    def act(self, obs_vec, goal_raw, rng, explore=True):
        return rng.uniform(
            self.spec.action_low, self.spec.action_high, size=self.spec.action_dim
        ), {}


# -- demonstrations and multi-trial helpers --------------------------------


def demo_gen(env_name, episodes, perturbation, out_path, seed=0, action_noise=0.0):
    env = make_env(env_name, derive_int(seed, "demo"), action_noise=action_noise)
    records = generate_demonstrations(env, episodes, perturbation)
    save_demonstrations(out_path, records, env_name=env_name, perturbation=perturbation)
    return Path(out_path)


def max_workers():
    return max(1, int(os.environ.get("MYOE_THREADS", "1")))


def train_many(configs):
    """Run several trials, parallelizing across processes when allowed."""
    workers = min(max_workers(), len(configs))
    if workers <= 1:
        return [train(cfg) for cfg in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(train, configs))
