"""Diagonal-Gaussian math used by every stochastic head in the agent.

All distribution parameters live in the autodiff graph, so KL terms,
entropies, and reparameterized samples are differentiable. Batched usage
treats the last axis as the event dimension; reductions sum over it and
keep any leading batch axes.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor

LOG_STD_MIN = -8.0
LOG_STD_MAX = 2.0

# entropy of a unit Gaussian per dimension, 0.5 * ln(2*pi*e)
UNIT_GAUSSIAN_ENTROPY = 0.5 * math.log(2.0 * math.pi * math.e)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class DiagGaussian:
    """Diagonal Gaussian with mean and log standard deviation tensors.

    ``log_std`` is clamped to [LOG_STD_MIN, LOG_STD_MAX] at construction so
    no head can collapse its variance to zero or blow it up.
    """

    __slots__ = ("mean", "log_std")

    def __init__(self, mean, log_std, validate=True):
        mean = as_tensor(mean)
        log_std = as_tensor(log_std, like=mean)
        if mean.shape != log_std.shape:
            raise ValueError(
                f"mean/log_std shape mismatch: {mean.shape} vs {log_std.shape}"
            )
        if mean.shape == () or mean.shape[-1] < 1:
            raise ValueError("event dimension must be >= 1")
        if validate:
            if not np.isfinite(mean.data).all():
                raise ValueError("non-finite entries in mean")
            if not np.isfinite(log_std.data).all():
                raise ValueError("non-finite entries in log_std")
        self.mean = mean
        self.log_std = ad.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)

    @property
    def dim(self):
        return self.mean.shape[-1]

    @property
    def std(self):
        return ad.exp(self.log_std)

    def detach(self):
        return DiagGaussian(self.mean.detach(), self.log_std.detach(), validate=False)

    def sample(self, rng=None, noise=None):
        """Reparameterized draw; pass ``noise`` explicitly for replayable paths."""
        if noise is None:
            if rng is None:
                raise ValueError("need an rng or explicit noise")
            noise = rng.standard_normal(self.mean.shape).astype(self.mean.dtype, copy=False)
        return reparameterized_sample(self, noise)

    def log_prob(self, x):
        """Log density at x, summed over the event axis."""
        x = as_tensor(x, like=self.mean)
        z = (x - self.mean) * ad.exp(-self.log_std)
        per_dim = -(HALF_LOG_2PI + self.log_std + 0.5 * ad.square(z))
        return per_dim.sum(axis=-1)

    def __repr__(self):
        return f"DiagGaussian(dim={self.dim}, batch={self.mean.shape[:-1]})"


def reparameterized_sample(d: DiagGaussian, noise) -> Tensor:
    """mean + exp(log_std) * noise; differentiable through both parameters."""
    noise = np.asarray(noise)
    if noise.shape != d.mean.shape:
        raise ValueError(f"noise shape {noise.shape} != event shape {d.mean.shape}")
    return d.mean + ad.exp(d.log_std) * ad.constant(noise)


def kl_diag_gaussian(q: DiagGaussian, p: DiagGaussian) -> Tensor:
    """KL(q || p) in nats, summed over the event axis."""
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: q has {q.dim}, p has {p.dim}")
    var_ratio = ad.exp(2.0 * (q.log_std - p.log_std))
    mean_term = ad.square((q.mean - p.mean) * ad.exp(-p.log_std))
    per_dim = p.log_std - q.log_std + 0.5 * (var_ratio + mean_term) - 0.5
    return per_dim.sum(axis=-1)


def entropy_diag_gaussian(d: DiagGaussian) -> Tensor:
    """Differential entropy in nats, summed over the event axis."""
    return (UNIT_GAUSSIAN_ENTROPY + d.log_std).sum(axis=-1)


def softmax(logits, axis=-1) -> Tensor:
    """Numerically stable softmax over ``axis``; accepts arrays or Tensors.

    The max logit is subtracted before exponentiation, which also makes the
    result exactly invariant to constant shifts whenever the shifted
    subtraction is exact in floating point.
    """
    t = as_tensor(logits)
    if t.data.size == 0:
        raise ValueError("softmax of an empty vector")
    if not np.isfinite(t.data).all():
        raise ValueError("softmax requires finite logits")
    shifted = t - ad.constant(t.data.max(axis=axis, keepdims=True))
    e = ad.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def categorical_entropy(weights: Tensor, axis=-1) -> Tensor:
    """Entropy -sum(w ln w) of simplex weights, in nats."""
    w = as_tensor(weights)
    return -(w * ad.log(w)).sum(axis=axis)
