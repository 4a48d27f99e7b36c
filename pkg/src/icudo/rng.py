"""Counter-based random streams.

Every random draw in the package is a pure function of ``(seed, tags...,
counter)``. Replicates and estimators get their own Philox generators keyed
by a hash of their tags; per-row draws inside the samplers use a vectorized
SplitMix64 hash of the row index, so row ``i`` sees the same numbers no matter
how many rows are drawn or in which order they are evaluated.
"""

from __future__ import annotations

import os

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _as_u64(v) -> np.uint64:
    return np.uint64(int(v) & _MASK64)


def stream_key(seed: int, *tags: int) -> int:
    """Hash ``seed`` and integer ``tags`` into a 64-bit stream key."""
    h = splitmix64(_as_u64(seed))
    for tag in tags:
        h = splitmix64(h ^ splitmix64(_as_u64(tag)))
    return int(h)


def generator(seed: int, *tags: int) -> np.random.Generator:
    """Philox generator for the sub-stream identified by ``tags``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *tags)))


def counter_uniform(key: int, rows, slots: int) -> np.ndarray:
    """Uniforms on [0, 1) of shape ``(len(rows), slots)``.

    Entry ``[i, j]`` depends only on ``(key, rows[i], j)``.
    """
    rows = np.asarray(rows, dtype=np.uint64)
    base = splitmix64(splitmix64(rows) ^ _as_u64(key))
    with np.errstate(over="ignore"):
        ctr = base[:, None] + np.arange(1, slots + 1, dtype=np.uint64)[None, :] * _GOLDEN
    bits = splitmix64(ctr) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / (1 << 53))


def uniform_index(u: np.ndarray, size) -> np.ndarray:
    """Map uniforms to integers in ``[0, size)``."""
    size = np.asarray(size)
    out = np.floor(u * size).astype(np.int64)
    return np.minimum(out, size - 1)


def resolve_seed(seed: int | None) -> int:
    """Explicit seed, else ``$ICUDO_SEED``, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get("ICUDO_SEED")
    if env:
        return int(env)
    return 0
