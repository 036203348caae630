"""Deterministic 64-bit random generator used by every stochastic operation.

The generator is SplitMix64: a counter advanced by a fixed odd gamma, with
each output produced by an avalanche mix of the counter value.  Because the
mix is a pure function of ``seed + k * gamma``, blocks of outputs can be
produced vectorized in numpy uint64 arithmetic while staying bit-identical
to repeated single draws.  All randomness in this package flows through
explicit instances of this class, which is what makes runs reproducible
from a single integer seed.
"""

from __future__ import annotations

import numpy as np

_GAMMA_INT = 0x9E3779B97F4A7C15
_MIX1_INT = 0xBF58476D1CE4E5B9
_MIX2_INT = 0x94D049BB133111EB
_GAMMA = np.uint64(_GAMMA_INT)
_MIX1 = np.uint64(_MIX1_INT)
_MIX2 = np.uint64(_MIX2_INT)
_MASK = 0xFFFFFFFFFFFFFFFF

# 2**-53, for mapping the top 53 bits of a draw onto [0, 1)
_INV_2_53 = float(2.0 ** -53)


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer over a uint64 array (modular arithmetic).

    numpy uint64 *array* arithmetic wraps silently; scalar paths use
    :func:`_mix_int` instead because numpy warns on scalar overflow.
    """
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _mix_int(z: int) -> int:
    """SplitMix64 finalizer over a Python int, masked to 64 bits."""
    z = ((z ^ (z >> 30)) * _MIX1_INT) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2_INT) & _MASK
    return z ^ (z >> 31)


def _fnv1a(text: str) -> int:
    """Stable 64-bit FNV-1a hash of a string (no process salt)."""
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


class SplitMix64:
    """Seeded deterministic generator; one instance per random stream."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._state = self.seed  # Python int; masked on every advance

    def __repr__(self) -> str:
        return f"SplitMix64(seed={self.seed})"

    # -- raw draws ---------------------------------------------------------

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA_INT) & _MASK
        return _mix_int(self._state)

    def _raw(self, n: int) -> np.ndarray:
        """n consecutive u64 outputs, bit-identical to n next_u64 calls."""
        if n < 0:
            raise ValueError(f"draw count must be >= 0, got {n}")
        counters = np.uint64(self._state) + _GAMMA * np.arange(1, n + 1, dtype=np.uint64)
        self._state = (self._state + _GAMMA_INT * n) & _MASK
        return _mix(counters)

    # -- distributions -----------------------------------------------------

    def uniform(self, low=0.0, high=1.0, shape=None) -> np.ndarray | float:
        """Uniform float64 draws in [low, high)."""
        if shape is None:
            u = (self.next_u64() >> 11) * _INV_2_53
            return low + (high - low) * u
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return (low + (high - low) * u).reshape(shape)

    def normal(self, mean=0.0, std=1.0, shape=None) -> np.ndarray | float:
        """Gaussian draws via Box-Muller (two uniforms per pair of outputs)."""
        scalar = shape is None
        shape = (1,) if scalar else ((shape,) if isinstance(shape, int) else tuple(shape))
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        raw = self._raw(2 * pairs)
        # u1 in (0, 1] so that log(u1) is finite
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        out = mean + std * z
        return float(out[0]) if scalar else out.reshape(shape)

    def randint(self, bound: int) -> int:
        """Integer in [0, bound). Modulo reduction; bias is negligible for
        the small bounds used here and keeps the draw count predictable."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        return self.next_u64() % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx

    # -- stream derivation ---------------------------------------------------

    def derive(self, *tags: int | str) -> "SplitMix64":
        """Child generator keyed by (parent seed, tags).

        Independent named streams let e.g. weight init, split shuffling and
        per-sample augmentation draw from one run seed without interfering.
        """
        z = self.seed
        for tag in tags:
            t = _fnv1a(tag) if isinstance(tag, str) else (int(tag) & _MASK)
            z = _mix_int(((z ^ t) + _GAMMA_INT) & _MASK)
        return SplitMix64(z)
