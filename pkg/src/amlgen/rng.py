"""Deterministic, splittable random streams.

A stream is identified by the master seed plus a path of ``(tag, index)``
pairs.  The path is hashed into a Philox key, so a stream's draws depend only
on where it sits in the tree and never on the order in which sibling streams
were consumed.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    master_seed: int
    path: tuple[tuple[str, int], ...] = ()

    def derive(self, tag: str, index: int = 0) -> "RandomStream":
        return RandomStream(self.master_seed, self.path + ((str(tag), int(index)),))

    def key(self) -> int:
        text = f"{self.master_seed & _MASK64}"
        for tag, index in self.path:
            text += f"/{tag}:{index}"
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        return int.from_bytes(digest[:16], "little")

    def rng(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.Philox(key=self.key()))

    def seed_int(self) -> int:
        """63-bit integer derived from the stream (for seeding nested runs)."""
        return self.key() & ((1 << 63) - 1)


def derive_substream(parent: RandomStream, tag: str, index: int = 0) -> RandomStream:
    return parent.derive(tag, index)


class UniformPool:
    """Scalar uniform draws served from bulk batches.

    Python loops that need one or two random numbers per iteration spend most
    of their time in generator call overhead; drawing in blocks of ``batch``
    keeps the sequence identical while amortising that cost.
    """

    def __init__(self, rng: np.random.Generator, batch: int = 65536):
        self._rng = rng
        self._batch = batch
        self._buf = rng.random(batch)
        self._pos = 0

    def random(self) -> float:
        if self._pos == self._batch:
            self._buf = self._rng.random(self._batch)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)

    def randint(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        k = int(self.random() * n)
        return k if k < n else n - 1
