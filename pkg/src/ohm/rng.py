"""Counter-based randomness.

Every random number is a pure function of a 64-bit master seed and an integer
key tuple, computed with the SplitMix64 finalizer.  Nothing is stateful, so
results do not depend on evaluation order or thread count.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_MASK53 = float(2.0**-53)

# stream tags keep different random quantities independent
TAG_EDGE = 0x45444745
TAG_MARK_SIGN = 0x4D41524B
TAG_MARK_SIZE = 0x4D41524C
TAG_POISSON = 0x504F4953


def _as_u64(x) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype == np.uint64:
        return a
    return np.asarray(a, dtype=np.int64).astype(np.uint64)


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 output function applied elementwise (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _C1
        z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


def hash_keys(seed: int, *keys) -> np.ndarray:
    """Hash ``seed`` and broadcastable integer key arrays to uint64."""
    h = mix64(np.asarray(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) + _GOLDEN)
    with np.errstate(over="ignore"):
        for k in keys:
            h = mix64(h ^ (_as_u64(k) + _GOLDEN))
    return h


def uniforms(seed: int, *keys) -> np.ndarray:
    """Uniform doubles in [0, 1), one per broadcast key position."""
    h = hash_keys(seed, *keys)
    return (h >> np.uint64(11)).astype(np.float64) * _MASK53
