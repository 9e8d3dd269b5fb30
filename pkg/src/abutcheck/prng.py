"""xorshift64* generator with per-purpose seed splitting.

A fixed, fully specified algorithm keeps pin pairings and strap draws
reproducible across runs, platforms and worker counts. Each consumer asks
for its own stream (`Xorshift64Star.stream(seed, "pins:scell_INVX1")`), so
adding a draw in one place never perturbs another.
"""

from __future__ import annotations

from typing import List, MutableSequence, TypeVar

MASK64 = (1 << 64) - 1
MULTIPLIER = 0x2545F4914F6CDD1D

T = TypeVar("T")


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


class Xorshift64Star:
    def __init__(self, state: int):
        state &= MASK64
        # the all-zero state is a fixed point of xorshift
        self.state = state or 0x9E3779B97F4A7C15

    @classmethod
    def stream(cls, seed: int, purpose: str) -> "Xorshift64Star":
        return cls(splitmix64((seed & MASK64) ^ fnv1a64(purpose)))

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * MULTIPLIER) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) / float(1 << 53)

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def shuffle(self, items: MutableSequence[T]) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def draws(self, k: int) -> List[int]:
        return [self.next_u64() for _ in range(k)]
