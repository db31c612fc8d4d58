"""Portable deterministic random numbers.

Two primitives, both built on the splitmix64 finalizer so that outputs can be
reproduced bit-for-bit in any language:

* ``Rng`` -- a sequential xorshift64* generator, seeded through splitmix64.
  State update: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27``, output
  ``x * 0x2545F4914F6CDD1D`` (all mod 2**64).
* ``hash_mix`` / ``hash_u64`` -- a stateless counter-based hash for per-pixel
  noise draws, where the draw must depend only on (seed, frame, pixel).

splitmix64 finalizer (Steele et al.):
  z += 0x9E3779B97F4A7C15
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
  z = (z ^ (z >> 27)) * 0x94D049BB133111EB
  return z ^ (z >> 31)

Floats in [0, 1) use the top 53 bits: ``(u64 >> 11) * 2**-53``.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_M1 = 0xBF58476D1CE4E5B9
_SM_M2 = 0x94D049BB133111EB
_XS_MULT = 0x2545F4914F6CDD1D
_INV_2_53 = 2.0 ** -53


def splitmix64(z: int) -> int:
    """One splitmix64 step on a 64-bit integer (advance + finalize)."""
    z = (z + _SM_GAMMA) & _MASK
    z = ((z ^ (z >> 30)) * _SM_M1) & _MASK
    z = ((z ^ (z >> 27)) * _SM_M2) & _MASK
    return z ^ (z >> 31)


class Rng:
    """Sequential xorshift64* generator with splitmix64 seeding."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        x = splitmix64(self.seed)
        if x == 0:  # xorshift state must be nonzero
            x = _SM_GAMMA
        self._state = x

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK
        x ^= x >> 27
        self._state = x
        return (x * _XS_MULT) & _MASK

    def uniform(self) -> float:
        """Float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * _INV_2_53

    def randint(self, n: int) -> int:
        """Integer in [0, n) via the floor of a uniform draw."""
        return int(self.uniform() * n)

    def uniform_range(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def choice_weighted(self, weights) -> int:
        """Index drawn proportionally to ``weights`` (nonnegative)."""
        total = float(sum(weights))
        r = self.uniform() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if r < acc:
                return i
        return len(weights) - 1


def hash_mix(z: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 step over a uint64 array."""
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        z = (z + np.uint64(_SM_GAMMA)).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_SM_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_SM_M2)
        return z ^ (z >> np.uint64(31))


def hash_u64(seed: int, stream: int, index: np.ndarray) -> np.ndarray:
    """Counter-based draw: u64 per index, fixed by (seed, stream, index)."""
    base = np.uint64(splitmix64((seed & _MASK) ^ ((stream * _SM_GAMMA) & _MASK)))
    idx = np.asarray(index, dtype=np.uint64)
    return hash_mix(idx ^ base)


def hash_uniform(seed: int, stream: int, index: np.ndarray) -> np.ndarray:
    """Counter-based floats in [0, 1), one per index."""
    return (hash_u64(seed, stream, index) >> np.uint64(11)).astype(np.float64) * _INV_2_53
