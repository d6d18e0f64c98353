"""Deterministic pseudorandom generator used for init, shuffling, and noise.

The generator is xoshiro256** seeded through SplitMix64, a fixed
xorshift-family algorithm with a documented stream: uniform doubles are
(next_u64 >> 11) * 2^-53, normals come from the Box-Muller transform on
consecutive stream pairs, and shuffles are Fisher-Yates with
j = floor(u * (i + 1)).  Identical seeds give identical streams on every
platform; the bulk fill runs through the compiled kernel when available.
"""

from __future__ import annotations

import numpy as np

from . import kernels

_U64 = (1 << 64) - 1


def _splitmix64(seed: int) -> list[int]:
    s = seed & _U64
    words = []
    for _ in range(4):
        s = (s + 0x9E3779B97F4A7C15) & _U64
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
        words.append(z ^ (z >> 31))
    return words


class Rng:
    """xoshiro256** stream with array helpers.

    The 4-word state is exposed for checkpointing; restoring it resumes
    the stream exactly.
    """

    def __init__(self, seed: int):
        self._state = np.array(_splitmix64(int(seed)), dtype=np.uint64)

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(int(w) for w in self._state)

    def set_state(self, words) -> None:
        if len(words) != 4:
            raise ValueError("rng state must be 4 uint64 words")
        self._state = np.array([int(w) & _U64 for w in words], dtype=np.uint64)

    def random(self, n: int | None = None):
        """One uniform [0, 1) double, or an array of n of them."""
        out = np.empty(n if n is not None else 1, dtype=np.float64)
        kernels.fill_uniform(self._state, out)
        return out if n is not None else float(out[0])

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        u = np.empty(int(np.prod(shape)), dtype=np.float64)
        kernels.fill_uniform(self._state, u)
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape, sigma: float = 1.0) -> np.ndarray:
        """Gaussian noise via Box-Muller on consecutive uniform pairs."""
        count = int(np.prod(shape))
        pairs = (count + 1) // 2
        u = np.empty(2 * pairs, dtype=np.float64)
        kernels.fill_uniform(self._state, u)
        # 1 - u lies in (0, 1], keeping the log finite.
        radius = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return (sigma * z[:count]).reshape(shape)

    def randint(self, bound: int) -> int:
        """Integer uniform on [0, bound) as floor(u * bound)."""
        return int(self.random() * bound)

    def shuffle(self, items: list) -> None:
        """Fisher-Yates shuffle, in place."""
        n = len(items)
        if n < 2:
            return
        u = np.empty(n - 1, dtype=np.float64)
        kernels.fill_uniform(self._state, u)
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * (i + 1))
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        self.shuffle(items)
        return items
