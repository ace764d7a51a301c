"""Counter-based deterministic RNG streams built on Philox.

Every draw derives a fresh generator from (seed, stream_id, counter) and bumps
the counter, so the output sequence is a pure function of the triple and
independent of how many variates each call consumes.
"""
from __future__ import annotations

import numpy as np

_COUNTER_STRIDE_BITS = 192  # each draw gets its own 2^192-state Philox block


class RngStream:
    """One logical random stream; owned by a single consumer at a time."""

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def child(self, stream_id: int) -> "RngStream":
        """Independent stream under the same seed."""
        return RngStream(self.seed, stream_id)

    def clone(self) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.counter)

    def _generator(self) -> np.random.Generator:
        bg = np.random.Philox(
            key=np.array([self.seed, self.stream_id], dtype=np.uint64),
            counter=self.counter << _COUNTER_STRIDE_BITS,
        )
        self.counter += 1
        return np.random.Generator(bg)

    def standard_normal(self, shape=()) -> np.ndarray:
        return self._generator().standard_normal(shape)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=()) -> np.ndarray:
        return self._generator().uniform(low, high, shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._generator().integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator().permutation(n)
