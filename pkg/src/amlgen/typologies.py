"""Typology templates and pattern instances.

A template lays out ``size`` positions and the directed edges between them.
Each edge carries a rank: edges of equal rank form one layer, and a layer must
finish before the next one starts.  Single-rank kinds are unordered.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORDERED_KINDS = frozenset({"cycle", "forward", "scatter_gather", "gather_scatter",
                           "stacked_bipartite", "mutual"})


def layer_sizes(size: int, layers: int) -> list[int]:
    """Split ``size`` members over ``layers`` as evenly as possible (front-loaded)."""
    base, extra = divmod(size, layers)
    return [base + (1 if i < extra else 0) for i in range(layers)]


def template(kind: str, size: int, layers: int = 3):
    """Return ``(edges, ranks)`` over positions ``0..size-1``.

    ``edges`` is an ``(m, 2)`` int array of position pairs and ``ranks`` the
    layer index of every edge.
    """
    e: list[tuple[int, int]] = []
    r: list[int] = []
    if kind in ("direct", "periodic"):
        e, r = [(0, 1)], [0]
    elif kind == "mutual":
        e, r = [(0, 1), (1, 0)], [0, 1]
    elif kind == "forward":
        e, r = [(0, 1), (1, 2)], [0, 1]
    elif kind == "fan_out":
        e = [(0, j) for j in range(1, size)]
        r = [0] * len(e)
    elif kind == "fan_in":
        e = [(j, 0) for j in range(1, size)]
        r = [0] * len(e)
    elif kind == "cycle":
        e = [(i, (i + 1) % size) for i in range(size)]
        r = list(range(size))
    elif kind == "scatter_gather":
        sink = size - 1
        for m in range(1, size - 1):
            e.append((0, m))
            r.append(0)
        for m in range(1, size - 1):
            e.append((m, sink))
            r.append(1)
    elif kind == "gather_scatter":
        n_in = size // 2  # ceil((size - 1) / 2) inputs
        ins = range(1, 1 + n_in)
        outs = range(1 + n_in, size)
        for i in ins:
            e.append((i, 0))
            r.append(0)
        for o in outs:
            e.append((0, o))
            r.append(1)
    elif kind == "stacked_bipartite":
        sizes = layer_sizes(size, layers)
        start = np.concatenate([[0], np.cumsum(sizes)])
        for li in range(layers - 1):
            for a in range(start[li], start[li + 1]):
                for b in range(start[li + 1], start[li + 2]):
                    e.append((int(a), int(b)))
                    r.append(li)
    else:
        raise ValueError(f"unknown typology kind {kind!r}")
    return np.asarray(e, dtype=np.int64).reshape(-1, 2), np.asarray(r, dtype=np.int64)


@dataclass
class PatternInstance:
    """A typology placed on concrete accounts.

    ``members[i]`` is the account at template position ``i``; ``edges`` holds
    account ids.  ``steps`` is filled by the scheduler (one step per edge).
    """
    pattern_id: int
    kind: str
    is_alert: bool
    members: np.ndarray
    edges: np.ndarray
    ranks: np.ndarray
    scheme: str = "unordered"
    steps: np.ndarray | None = field(default=None, repr=False)
    duration: int = 28

    @property
    def size(self) -> int:
        return len(self.members)

    def sources(self) -> np.ndarray:
        """Members that start the flow of funds (no incoming template edge).

        Cycles have none by construction; their first position starts the flow.
        """
        has_in = np.isin(self.members, self.edges[:, 1])
        src = self.members[~has_in]
        if len(src) == 0:
            src = self.members[:1]
        return src


def instantiate(pattern_id: int, kind: str, is_alert: bool, members, layers: int = 3,
                scheme: str = "unordered", duration: int = 28) -> PatternInstance:
    members = np.asarray(members, dtype=np.int64)
    pos, ranks = template(kind, len(members), layers)
    return PatternInstance(pattern_id, kind, is_alert, members, members[pos], ranks, scheme,
                           duration=duration)
