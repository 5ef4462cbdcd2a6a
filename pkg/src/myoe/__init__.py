"""Learn-from-few-demos agents built around a mixture-of-preferences
state-space model and preference-regret behavior optimization, with
behavior-cloning baselines and miniature sparse-reward environments."""

from .autodiff import Tensor, grad_check, gradients, stop_gradient
from .config import RunConfig, preset
from .distributions import (
    DiagGaussian,
    entropy_diag_gaussian,
    kl_diag_gaussian,
    reparameterized_sample,
    softmax,
)
from .envs import EnvSpec, available_envs, generate_demonstrations, make_env
from .harness import evaluate, evaluate_agent, train
from .replay import EpisodeRecord, ReplayBuffer

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "grad_check",
    "gradients",
    "stop_gradient",
    "RunConfig",
    "preset",
    "DiagGaussian",
    "entropy_diag_gaussian",
    "kl_diag_gaussian",
    "reparameterized_sample",
    "softmax",
    "EnvSpec",
    "available_envs",
    "generate_demonstrations",
    "make_env",
    "evaluate",
    "evaluate_agent",
    "train",
    "EpisodeRecord",
    "ReplayBuffer",
    "__version__",
]
