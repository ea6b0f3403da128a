"""Platform-stable pseudo-random numbers.

The stream is xorshift64* (Vigna 2016) seeded through one splitmix64 step::

    state = splitmix64(seed)            # 0 is remapped to 0x9E3779B97F4A7C15
    x ^= x >> 12; x ^= x << 25; x ^= x >> 27   (mod 2**64)
    out = x * 0x2545F4914F6CDD1D        (mod 2**64)

``random()`` takes the top 53 bits of ``out``.  Everything is integer
arithmetic, so two implementations of this recurrence emit the same packages.
"""

from __future__ import annotations

import math
from typing import MutableSequence, Sequence, TypeVar

T = TypeVar("T")

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


class XorShift64Star:
    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self._x = splitmix64(self.seed) or GOLDEN

    def next_u64(self) -> int:
        x = self._x
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self._x = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]`` by rejection (no modulo bias)."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError("empty range")
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            r = self.next_u64()
            if r < limit:
                return lo + r % span

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def choice(self, seq: Sequence[T]) -> T:
        return seq[self.randint(0, len(seq) - 1)]

    def shuffle(self, seq: MutableSequence[T]) -> None:
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(0, i)
            seq[i], seq[j] = seq[j], seq[i]

    def gauss(self) -> float:
        # Box-Muller, one draw per call; 1 - u keeps the log argument positive
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def lognormal(self, sigma: float) -> float:
        return math.exp(sigma * self.gauss())

    def spawn(self, tag: int) -> XorShift64Star:
        return XorShift64Star(splitmix64(self.seed ^ splitmix64(tag & MASK64)))
