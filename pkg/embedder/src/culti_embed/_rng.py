"""Portable 64-bit PRNG for crop sampling.

splitmix64 (Steele, Lea & Flood, OOPSLA 2014) plus FNV-1a hashing for
deriving one independent stream per (seed, record id). Pure integer
arithmetic, so streams are identical on every platform and interpreter.
"""

MASK64 = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def unit(self) -> float:
        """Uniform float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) / float(1 << 53)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection sampling."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        limit = MASK64 - (MASK64 + 1) % bound
        while True:
            value = self.next_u64()
            if value <= limit:
                return value % bound


def record_stream(seed: int, record_id: str) -> SplitMix64:
    """Independent stream per record so corpus order cannot matter."""
    return SplitMix64((seed & MASK64) ^ fnv1a64(record_id.encode("utf-8")))
