"""Parameter storage and the tiny dense/recurrent building blocks.

Every learnable array lives in a ParameterSet under a unique name and a
submodel tag (world model, policy, value, target value). Target-value
entries are created non-trainable: they never receive gradients and are
only moved by EMA blending.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

WORLD_MODEL = "world_model"
POLICY = "policy"
VALUE = "value"
TARGET_VALUE = "target_value"


class ParameterSet:
    """Named table of parameter tensors with immutable shapes."""

    def __init__(self):
        self._tensors = {}
        self._tags = {}

    def add(self, name, array, tag, trainable=True) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(array), requires_grad=trainable)
        self._tensors[name] = t
        self._tags[name] = tag
        return t

    def __getitem__(self, name) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return list(self._tensors.items())

    def tag(self, name):
        return self._tags[name]

    def tagged(self, *tags):
        return [(n, t) for n, t in self._tensors.items() if self._tags[n] in tags]

    def trainable(self, *tags):
        pairs = self.tagged(*tags) if tags else self.items()
        return [(n, t) for n, t in pairs if t.requires_grad]

    def count(self, *tags):
        pairs = self.tagged(*tags) if tags else self.items()
        return int(sum(t.data.size for _, t in pairs))

    def set_value(self, name, array):
        t = self._tensors[name]
        array = np.asarray(array, dtype=t.data.dtype)
        if array.shape != t.data.shape:
            raise ValueError(
                f"shape of {name} is immutable: {t.data.shape}, got {array.shape}"
            )
        t.data = array

    def state_arrays(self):
        """Insertion-ordered {name: array} view for checkpointing."""
        return {n: t.data for n, t in self._tensors.items()}

    def load_state_arrays(self, arrays):
        missing = set(self._tensors) - set(arrays)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        for name, arr in arrays.items():
            if name not in self._tensors:
                raise ValueError(f"unknown parameter: {name}")
            self.set_value(name, arr)


def dense_init(pset, name, n_in, n_out, tag, rng, dtype=np.float32, trainable=True):
    """Xavier-uniform weight and zero bias registered under name.W / name.b."""
    bound = np.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype)
    b = np.zeros(n_out, dtype=dtype)
    pset.add(f"{name}.W", w, tag, trainable)
    pset.add(f"{name}.b", b, tag, trainable)


def dense(pset, name, x) -> Tensor:
    return x @ pset[f"{name}.W"] + pset[f"{name}.b"]


def mlp_init(pset, name, n_in, n_hidden, n_out, tag, rng, dtype=np.float32, trainable=True):
    """Two dense layers: hidden tanh layer plus a linear output layer."""
    dense_init(pset, f"{name}.h", n_in, n_hidden, tag, rng, dtype, trainable)
    dense_init(pset, f"{name}.out", n_hidden, n_out, tag, rng, dtype, trainable)


def mlp(pset, name, x) -> Tensor:
    h = ad.tanh(dense(pset, f"{name}.h", x))
    return dense(pset, f"{name}.out", h)


def gaussian_head_init(pset, name, n_in, n_hidden, n_out, tag, rng, dtype=np.float32):
    mlp_init(pset, name, n_in, n_hidden, 2 * n_out, tag, rng, dtype)


def gaussian_head(pset, name, x, n_out, log_std_offset=0.0):
    """MLP emitting (mean, log_std) halves for a DiagGaussian over n_out dims."""
    out = mlp(pset, name, x)
    mean = out[..., :n_out]
    log_std = out[..., n_out:]
    if log_std_offset:
        log_std = log_std + log_std_offset
    return mean, log_std


def gru_init(pset, name, n_in, n_hidden, tag, rng, dtype=np.float32):
    """Gated recurrent cell parameters: update/reset/candidate gates."""
    for gate in ("z", "r", "n"):
        bound = np.sqrt(6.0 / (n_in + n_hidden))
        wx = rng.uniform(-bound, bound, size=(n_in, n_hidden)).astype(dtype)
        bound_h = np.sqrt(6.0 / (2 * n_hidden))
        wh = rng.uniform(-bound_h, bound_h, size=(n_hidden, n_hidden)).astype(dtype)
        pset.add(f"{name}.Wx{gate}", wx, tag)
        pset.add(f"{name}.Wh{gate}", wh, tag)
        pset.add(f"{name}.b{gate}", np.zeros(n_hidden, dtype=dtype), tag)


def gru_step(pset, name, h, x) -> Tensor:
    """h' = (1 - z) * n + z * h with update gate z, reset gate r, candidate n."""
    if h.shape[-1] != pset[f"{name}.Whz"].shape[0]:
        raise ValueError(
            f"hidden size mismatch: h has {h.shape[-1]}, "
            f"cell expects {pset[f'{name}.Whz'].shape[0]}"
        )
    if x.shape[-1] != pset[f"{name}.Wxz"].shape[0]:
        raise ValueError(
            f"input size mismatch: x has {x.shape[-1]}, "
            f"cell expects {pset[f'{name}.Wxz'].shape[0]}"
        )
    z = ad.sigmoid(x @ pset[f"{name}.Wxz"] + h @ pset[f"{name}.Whz"] + pset[f"{name}.bz"])
    r = ad.sigmoid(x @ pset[f"{name}.Wxr"] + h @ pset[f"{name}.Whr"] + pset[f"{name}.br"])
    n = ad.tanh(x @ pset[f"{name}.Wxn"] + (r * h) @ pset[f"{name}.Whn"] + pset[f"{name}.bn"])
    return (1.0 - z) * n + z * h
