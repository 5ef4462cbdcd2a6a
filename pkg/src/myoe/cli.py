"""Command-line entry points.

Exit codes: 0 on success, 2 for configuration problems, 3 for numeric
failures (rejected training or failed selfcheck).
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, PRESETS, load_config, preset


def _add_demo_gen(sub):
    p = sub.add_parser("demo-gen", help="generate expert demonstrations")
    p.add_argument("--env", required=True)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--perturb", choices=("none", "shake", "noise"), default="none")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)


def _add_train(sub):
    p = sub.add_parser("train", help="train an agent per a config file or preset")
    p.add_argument("--config", help="JSON config path, or preset name with --preset")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--agent", choices=("myoe", "mbc", "mbc-rnn", "mbc-vae", "ppo-bc"))


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)


def _add_selfcheck(sub):
    sub.add_parser("selfcheck", help="run the built-in oracle and gradient suites")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="myoe")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_demo_gen(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_selfcheck(sub)
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    if args.command == "demo-gen":
        from .harness import demo_gen

        noise = 0.1 if args.perturb == "noise" else 0.0
        perturb = args.perturb if args.perturb != "noise" else "none"
        path = demo_gen(
            args.env, args.episodes, perturb, args.out,
            seed=args.seed, action_noise=noise,
        )
        print(f"wrote {args.episodes} episodes to {path}")
        return 0

    if args.command == "train":
        from .harness import NumericFailure, train

        if args.preset:
            cfg = preset(args.preset)
        elif args.config:
            cfg = load_config(args.config)
        else:
            raise ConfigError("train needs --config PATH or --preset NAME")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out_dir = args.out
        if args.agent:
            cfg.agent = args.agent
        try:
            out = train(cfg)
        except NumericFailure as exc:
            print(f"numeric failure: {exc}", file=sys.stderr)
            return 3
        print(f"run complete: {out}")
        return 0

    if args.command == "eval":
        from .harness import evaluate

        summary = evaluate(args.checkpoint, episodes=args.episodes, seed=args.seed)
        print(f"success rate: {summary.format()} over {summary.episodes} episodes")
        print(f"mean return: {summary.mean_return:.3f}  "
              f"mean length: {summary.mean_length:.1f}")
        return 0

    if args.command == "selfcheck":
        from .selfcheck import run_selfcheck

        return 0 if run_selfcheck() else 3

    raise ConfigError(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
