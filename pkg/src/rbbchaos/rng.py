"""Seeded, splittable random streams.

Every replica gets its own stream derived from ``(master_seed, stream_id)``
through :class:`numpy.random.SeedSequence`, so a replica's draws never depend
on how replicas are scheduled across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MASK64 = (1 << 64) - 1


@dataclass
class RandomStream:
    """A reproducible PCG64 stream identified by ``(master_seed, stream_id)``.

    The underlying :class:`numpy.random.Generator` is created lazily and is
    stateful: a stream must not be shared between threads.
    """

    master_seed: int
    stream_id: int = 0
    _generator: np.random.Generator | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.stream_id < 0:
            raise ValueError(f"stream_id must be nonnegative, got {self.stream_id}")
        self.master_seed = int(self.master_seed) & MASK64

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            seq = np.random.SeedSequence(self.master_seed, spawn_key=(int(self.stream_id),))
            self._generator = np.random.Generator(np.random.PCG64(seq))
        return self._generator

    def substream(self, stream_id: int) -> "RandomStream":
        """Fresh stream with the same master seed and a different id."""
        return RandomStream(self.master_seed, stream_id)

    def child(self, *tag: int) -> "RandomStream":
        """Stream with a new master seed derived from this stream and ``tag``.

        Used to give each experiment in a sweep its own family of replica
        streams.
        """
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(int(self.stream_id), *map(int, tag)))
        return RandomStream(int(seq.generate_state(1, np.uint64)[0]))

    def spawn(self, count: int, offset: int = 0) -> list["RandomStream"]:
        return [RandomStream(self.master_seed, offset + i) for i in range(count)]

    def random(self) -> float:
        return float(self.generator.random())


def as_stream(rng: RandomStream | int | None) -> RandomStream:
    """Coerce a seed or ``None`` into a :class:`RandomStream`."""
    if isinstance(rng, RandomStream):
        return rng
    if rng is None:
        return RandomStream(int(np.random.SeedSequence().entropy) & MASK64)
    return RandomStream(int(rng))
