"""Pareto dominance, archives and nondomination ranks (minimisation)."""
from __future__ import annotations

import numpy as np


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool((a <= b).all() and (a < b).any())


def nondominated_mask(points) -> np.ndarray:
    """Brute force: True where no other point dominates."""
    P = np.asarray(points, dtype=float)
    if len(P) == 0:
        return np.zeros(0, dtype=bool)
    le = (P[:, None, :] <= P[None, :, :]).all(axis=2)
    lt = (P[:, None, :] < P[None, :, :]).any(axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    return ~dom.any(axis=0)


def nondomination_rank(points) -> np.ndarray:
    """Front index of every point (0 = nondominated)."""
    P = np.asarray(points, dtype=float)
    rank = np.full(len(P), -1, dtype=np.int64)
    left = np.arange(len(P))
    r = 0
    while len(left):
        m = nondominated_mask(P[left])
        rank[left[m]] = r
        left = left[~m]
        r += 1
    return rank


class ParetoArchive:
    """Set of records whose objective vectors are mutually nondominated.

    Records need an ``objectives`` attribute.  Equal vectors are both kept.
    """

    def __init__(self):
        self.members: list = []

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def add(self, record) -> bool:
        f = record.objectives
        if any(dominates(m.objectives, f) for m in self.members):
            return False
        self.members = [m for m in self.members if not dominates(f, m.objectives)]
        self.members.append(record)
        return True

    def objectives(self) -> np.ndarray:
        return np.array([m.objectives for m in self.members], dtype=float)
