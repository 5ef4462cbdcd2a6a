"""Adaptive moment optimizer with global-norm clipping and NaN rejection."""

from __future__ import annotations

import numpy as np


class NonFiniteGradError(RuntimeError):
    """Raised when a gradient table contains NaN or Inf; the step is rejected."""

    def __init__(self, tensor_name):
        super().__init__(f"non-finite gradient in '{tensor_name}'; step rejected")
        self.tensor_name = tensor_name


def clip_global_norm(grads, max_norm):
    """Scale the whole gradient table so its global L2 norm is <= max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g, dtype=np.float64)))
    norm = float(np.sqrt(total))
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


class Adam:
    """Bias-corrected adaptive moment estimation over a list of parameters.

    The parameter list fixes which tensors this optimizer may touch; a step
    with gradient keys outside that list is a contract violation. Non-finite
    gradients reject the whole step before any state is mutated.
    """

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=100.0):
        self.params = dict(params)
        for name, t in self.params.items():
            if not t.requires_grad:
                raise ValueError(f"optimizer given non-trainable parameter '{name}'")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self._m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self._v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self, grads):
        unknown = set(grads) - set(self.params)
        if unknown:
            raise ValueError(f"gradients for unknown parameters: {sorted(unknown)}")
        for name, g in grads.items():
            if not np.isfinite(g).all():
                raise NonFiniteGradError(name)
        if self.clip_norm is not None:
            grads, _ = clip_global_norm(grads, self.clip_norm)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = self.params[name]
            m = self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * g
            v = self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * np.square(g)
            update = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - update.astype(p.data.dtype, copy=False)
