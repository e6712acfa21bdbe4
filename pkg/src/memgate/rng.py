"""Portable 64-bit linear congruential generator.

The generator is deliberately simple so the exact draw sequence can be
reproduced in any language:

    state_{n+1} = (6364136223846793005 * state_n + 1442695040888963407) mod 2**64

Uniform floats take the top 53 bits of the new state. Gaussian draws use the
Box–Muller transform on two consecutive uniforms (no cached second value).
"""

from __future__ import annotations

import math
from typing import Sequence, TypeVar

T = TypeVar("T")

_MASK = (1 << 64) - 1
_MULT = 6364136223846793005
_INC = 1442695040888963407
_SCRAMBLE = 0x9E3779B97F4A7C15


class Lcg64:
    """Seeded LCG with a draw counter."""

    def __init__(self, seed: int) -> None:
        self.seed = seed & _MASK
        self.state = self.seed ^ _SCRAMBLE
        self.counter = 0

    def next_u64(self) -> int:
        self.state = (_MULT * self.state + _INC) & _MASK
        self.counter += 1
        return self.state

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) / 9007199254740992.0

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange needs n > 0")
        return int(self.random() * n)

    def choice(self, seq: Sequence[T]) -> T:
        return seq[self.randrange(len(seq))]

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        u1 = self.random()
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        return mu + sigma * r * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        # Fisher-Yates, high index first
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]
