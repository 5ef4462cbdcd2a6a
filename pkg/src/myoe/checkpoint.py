"""Versioned binary parameter container.

Layout: magic string "MYOE1", uint32 entry count, then per entry a
length-prefixed UTF-8 name, a dtype tag byte, a uint8 rank, uint32 dims,
and the raw little-endian array bytes. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MYOE1"

_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAG_FOR = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(RuntimeError):
    pass


def save_arrays(path, arrays):
    """Write an insertion-ordered {name: array} table."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            if arr.dtype not in _TAG_FOR:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for '{name}'")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", _TAG_FOR[arr.dtype], arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def load_arrays(path):
    """Read a container back into an insertion-ordered {name: array} table."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
        (count,) = struct.unpack("<I", f.read(4))
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            tag, ndim = struct.unpack("<BB", f.read(2))
            if tag not in _DTYPE_TAGS:
                raise CheckpointError(f"unknown dtype tag {tag} for '{name}'")
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            dtype = _DTYPE_TAGS[tag]
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            data = f.read(n_bytes)
            if len(data) != n_bytes:
                raise CheckpointError(f"truncated data for '{name}'")
            arr = np.frombuffer(data, dtype=dtype).reshape(shape)
            out[name] = arr.astype(arr.dtype.newbyteorder("="))
        return out


def save_parameters(path, pset):
    save_arrays(path, pset.state_arrays())


def load_parameters(path, pset):
    pset.load_state_arrays(load_arrays(path))
