"""Reproducible random streams for parallel path sampling.

A stream is (seed, stream_index) realized as a Philox counter-based
generator jumped stream_index blocks ahead. Distinct indices give
statistically independent streams, construction is O(1), and the mapping
is a pure function of the pair, so trajectory i always sees the same
randomness no matter how many workers run or in which order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_index: int = 0

    def bit_generator(self):
        return np.random.Philox(self.seed).jumped(self.stream_index)

    def generator(self):
        return np.random.Generator(self.bit_generator())

    def child(self, offset):
        return RngStream(self.seed, self.stream_index + offset)


def stream_bit_generators(base, count):
    """Yield the bit generators of base.child(0..count-1).

    Each yielded generator is a fresh object; identical to constructing
    the RngStream separately.
    """
    root = np.random.Philox(base.seed)
    for i in range(count):
        yield root.jumped(base.stream_index + i)


_MASK64 = (1 << 64) - 1


class StreamFactory:
    """Cheap per-index bit generators for hot batch loops.

    ``at(i)`` resets one reused Philox instance to the exact state of
    ``Philox(seed).jumped(i)`` (counter = i * 2**128, same key, empty
    buffer), so the stream is bit-identical to RngStream(seed, i) at a
    fraction of the construction cost. The returned object is the same
    instance every time: use it sequentially, one factory per worker.
    """

    def __init__(self, seed):
        self._bg = np.random.Philox(seed)
        key = self._bg.state["state"]["key"].copy()
        self._counter = np.zeros(4, dtype=np.uint64)
        self._template = {
            "bit_generator": "Philox",
            "state": {"counter": self._counter, "key": key},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }

    def at(self, index):
        self._counter[2] = index & _MASK64
        self._counter[3] = (index >> 64) & _MASK64
        self._bg.state = self._template
        return self._bg
