"""Seedable, splittable random streams shared by all modules.

Streams are keyed by (seed, stream_id) plus an optional derivation path, all
fed into numpy's SeedSequence so that distinct keys give statistically
independent generators and equal keys reproduce draws exactly.
"""

import numpy as np


class RngStream:
    """A single-owner random stream.

    The generator is created lazily and advances as it is consumed; build a
    fresh RngStream (same key) to replay a sequence, or `child(...)` to derive
    an independent stream.
    """

    def __init__(self, seed, stream_id=0, path=()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(k) for k in path)
        self._gen = None

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(
                entropy=self.seed, spawn_key=(self.stream_id, *self.path))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def child(self, *key):
        """Derive an independent stream; key ints extend the spawn path."""
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in key))

    def derive_seed(self) -> int:
        """A stable 64-bit integer derived from this stream's key (does not
        consume from the generator)."""
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id, *self.path))
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"
