"""Counter-based random streams.

Every uniform variate is a pure function of a key path such as
``(seed, "expected", replicate, level, node, draw)``.  Nothing is carried
between calls, so results do not depend on evaluation order, chunking or the
number of worker processes.

The mixing function is the SplitMix64 finalizer.  A scalar implementation on
Python integers derives stream keys, and a vectorized numpy implementation
produces bulk variates from those keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_U_GOLDEN = np.uint64(_GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / float(1 << 53)


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python integer."""
    x = (x + _GOLDEN) & _MASK
    x ^= x >> 30
    x = (x * _M1) & _MASK
    x ^= x >> 27
    x = (x * _M2) & _MASK
    x ^= x >> 31
    return x


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized twin of :func:`mix64` on ``uint64`` arrays."""
    x = np.asarray(x, dtype=np.uint64) + _U_GOLDEN
    x ^= x >> _S30
    x *= _U_M1
    x ^= x >> _S27
    x *= _U_M2
    x ^= x >> _S31
    return x


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK
    return h


def _word(w) -> int:
    if isinstance(w, str):
        return fnv1a64(w)
    if isinstance(w, (bool, np.bool_)):
        return int(w)
    if isinstance(w, (int, np.integer)):
        if w < 0:
            raise ValueError("stream words must be non-negative")
        return int(w) & _MASK
    raise TypeError(f"unsupported stream word {w!r}")


def _absorb(h: int, w: int) -> int:
    return mix64(h ^ mix64(w))


@dataclass(frozen=True)
class Stream:
    """An immutable position in the key tree.

    ``Stream(7).child("expected").child(12)`` names the substream of
    replicate 12 of the ``expected`` command under seed 7.
    """

    seed: int
    path: tuple = field(default=())

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    def child(self, *words) -> "Stream":
        for w in words:
            _word(w)
        return Stream(int(self.seed), self.path + tuple(words))

    @property
    def key(self) -> int:
        h = mix64(int(self.seed) & _MASK)
        for w in self.path:
            h = _absorb(h, _word(w))
        return h

    def uniforms(self, codes, draws: int = 1) -> np.ndarray:
        """Uniform variates in [0, 1) of shape ``(len(codes), draws)``.

        ``codes`` are non-negative integers naming nodes within this stream,
        for example the cell index of a square at a fixed level.
        """
        codes = np.asarray(codes, dtype=np.uint64).reshape(-1)
        base = mix64_array(np.uint64(self.key) ^ mix64_array(codes))
        d = mix64_array(np.arange(draws, dtype=np.uint64))
        h = mix64_array(base[:, None] ^ d[None, :])
        return (h >> _S11).astype(np.float64) * _INV53

    def uniform(self) -> float:
        return float(self.uniforms([0], 1)[0, 0])

    def generator(self) -> np.random.Generator:
        """A numpy generator seeded from this key, for bulk i.i.d. draws."""
        return np.random.Generator(np.random.Philox(key=self.key))
