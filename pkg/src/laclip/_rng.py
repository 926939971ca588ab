"""Portable deterministic randomness for split assignment.

The split permutation must be reproducible from the seed alone, across
platforms and across reimplementations in other languages. Library RNGs
do not promise a stable stream between versions, so the generator here is
pinned by construction:

* ``SplitMix64``: the splitmix64 mixing function (Steele, Lea & Flood,
  "Fast splittable pseudorandom number generators", OOPSLA 2014). State
  advances by the additive constant 0x9E3779B97F4A7C15; each output is
  the state passed through two xor-shift-multiply rounds.
* ``fnv1a64``: FNV-1a 64-bit hashing of UTF-8 bytes, used to derive one
  independent seed per record group from the user seed.
* ``shuffle``: Fisher-Yates driven by rejection-sampled bounded draws, so
  index selection is exactly uniform and independent of any modulo bias.

All arithmetic is modulo 2**64.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """splitmix64 stream over a 64-bit state."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform draw in [0, bound) via rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        # Reject draws from the tail that would bias the modulo.
        limit = _MASK + 1 - ((_MASK + 1) % bound)
        while True:
            value = self.next_u64()
            if value < limit:
                return value % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, iterating from the last index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def group_seed(seed: int, volume: str, category: str) -> int:
    """Per-group stream seed: user seed XOR hash of "volume\\x1fcategory".

    The unit-separator joint makes ("a", "bc") and ("ab", "c") distinct.
    """
    key = f"{volume}\x1f{category}".encode("utf-8")
    return (seed & _MASK) ^ fnv1a64(key)
