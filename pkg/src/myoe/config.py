"""Run configuration: every knob serialized with each run.

Configs are plain nested dataclasses that round-trip through JSON. Parsing
is strict: unknown keys are rejected so stale config files fail loudly
instead of silently running with defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

CONFIG_SCHEMA = 1
LOG_SCHEMA = 1


class ConfigError(ValueError):
    pass


@dataclass
class EnvConfig:
    name: str = "point-reach"
    action_noise: float = 0.0
    goal_random: bool = True
    pixels: bool = False


@dataclass
class ModelConfig:
    """World-model sizes and loss coefficients."""

    d_h: int = 128  # recurrent hidden state
    d_s: int = 32  # stochastic latent (shared by both streams)
    d_q: int = 16  # goal query embedding
    mixture_size: int = 4
    n_hidden: int = 128
    g_learned_dim: int = 8
    free_bits: float = 1.0  # KL floor in nats, applied to the masked mean
    mix_entropy_coef: float = 0.02  # weight of the mixture-entropy objective
    mix_l2_coef: float = 0.1  # L2 stabilizer inside that objective
    lr: float = 1e-3
    clip_norm: float = 100.0


@dataclass
class BehaviorConfig:
    """Actor-critic hyperparameters for learning inside imagination."""

    gamma: float = 0.99
    lam: float = 0.95
    horizon: int = 15
    ema_rate: float = 0.01
    entropy_coef: float = 0.0003
    expert_coef: float = 0.5
    value_reg_coef: float = 1.0
    lr: float = 1e-3
    clip_norm: float = 100.0
    policy_init_log_std: float = -1.0
    n_rollout_starts: int = 0  # 0 = use every valid posterior state


@dataclass
class BaselineConfig:
    hidden: int = 0  # 0 = fit width for parameter parity with the main agent
    n_layers: int = 2
    bc_weight: float = 0.5
    self_imitation: bool = True
    explore_noise: float = 0.2
    vae_latent: int = 8
    vae_coef: float = 1.0
    rnn_hidden: int = 0  # 0 = fit for parity
    ppo_rollout: int = 512
    ppo_epochs: int = 4
    ppo_minibatch: int = 128
    ppo_clip: float = 0.2
    ppo_entropy_coef: float = 0.001
    lr: float = 3e-4
    clip_norm: float = 100.0


@dataclass
class TrainConfig:
    total_env_steps: int = 150_000
    train_every: int = 4  # environment steps per update
    batch_size: int = 16
    seq_len: int = 32
    eval_every: int = 5_000
    eval_episodes: int = 10
    checkpoint_every: int = 50_000
    buffer_capacity: int = 1000
    expert_ratio: float = 0.25
    demo_episodes: int = 5
    demo_perturbation: str = "none"
    demo_path: str = ""  # load demos from file instead of generating
    nan_tolerance: int = 3  # consecutive rejected optimizer steps before abort


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    agent: str = "myoe"  # myoe | mbc | mbc-rnn | mbc-vae | ppo-bc
    seed: int = 0
    out_dir: str = "runs/run"
    config_schema: int = CONFIG_SCHEMA
    log_schema: int = LOG_SCHEMA

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {
    "env": EnvConfig,
    "model": ModelConfig,
    "behavior": BehaviorConfig,
    "baseline": BaselineConfig,
    "train": TrainConfig,
}

AGENT_VARIANTS = ("myoe", "mbc", "mbc-rnn", "mbc-vae", "ppo-bc")


def _build_section(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{path}' must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{path}': {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    top_known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - top_known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    if cfg.agent not in AGENT_VARIANTS:
        raise ConfigError(f"unknown agent '{cfg.agent}'; expected one of {AGENT_VARIANTS}")
    if cfg.config_schema != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {cfg.config_schema}")
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON in {path}: {exc}") from exc
    return config_from_dict(data)


def save_config(path, cfg: RunConfig):
    with open(path, "w", encoding="utf-8") as f:
        f.write(cfg.to_json() + "\n")


# -- presets -------------------------------------------------------------


def _desk_model():
    return ModelConfig(d_h=48, d_s=12, d_q=8, mixture_size=4, n_hidden=48, g_learned_dim=4)


def _desk_behavior():
    return BehaviorConfig(horizon=10, n_rollout_starts=64, gamma=0.95)


def _desk_train(total_env_steps):
    return TrainConfig(
        total_env_steps=total_env_steps,
        train_every=15,
        batch_size=8,
        seq_len=16,
        eval_every=5_000,
        eval_episodes=10,
        checkpoint_every=50_000,
        buffer_capacity=5_000,
    )


def preset(name) -> RunConfig:
    """Named experiment configurations used by the acceptance experiments."""
    if name == "point-reach":
        return RunConfig(
            env=EnvConfig(name="point-reach"),
            model=_desk_model(),
            behavior=_desk_behavior(),
            train=_desk_train(150_000),
            out_dir="runs/point-reach",
        )
    if name == "point-reach-noisy":
        cfg = preset("point-reach")
        cfg.env.action_noise = 0.1
        cfg.out_dir = "runs/point-reach-noisy"
        return cfg
    if name == "point-reach-shake":
        cfg = preset("point-reach")
        cfg.train = _desk_train(60_000)
        cfg.train.demo_perturbation = "shake"
        cfg.out_dir = "runs/point-reach-shake"
        return cfg
    if name == "four-rooms":
        return RunConfig(
            env=EnvConfig(name="four-rooms"),
            model=_desk_model(),
            behavior=_desk_behavior(),
            train=_desk_train(80_000),
            out_dir="runs/four-rooms",
        )
    if name == "four-rooms-m1":
        cfg = preset("four-rooms")
        cfg.model.mixture_size = 1
        cfg.out_dir = "runs/four-rooms-m1"
        return cfg
    if name == "block-push":
        cfg = RunConfig(
            env=EnvConfig(name="block-push"),
            model=_desk_model(),
            behavior=_desk_behavior(),
            train=_desk_train(150_000),
            out_dir="runs/block-push",
        )
        return cfg
    raise ConfigError(f"unknown preset '{name}'")


PRESETS = (
    "point-reach",
    "point-reach-noisy",
    "point-reach-shake",
    "four-rooms",
    "four-rooms-m1",
    "block-push",
)
