"""Greedy CART classifier (binary labels, Gini impurity)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels


def gini(n0: float, n1: float) -> float:
    n = n0 + n1
    if n == 0:
        return 0.0
    p = n1 / n
    return 2.0 * p * (1.0 - p)


@dataclass
class DecisionTree:
    """Array-backed binary tree.

    Leaves have ``feature == -1``.  ``value[i]`` holds the class counts of
    the training rows reaching node ``i``.
    """
    max_depth: int = 5
    min_samples_leaf: int = 1
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)
    depth: list = field(default_factory=list)
    single_class: bool = False
    n_features: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_splits(self) -> int:
        return sum(1 for f in self.feature if f >= 0)

    def _new(self, counts, depth) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(counts)
        self.depth.append(depth)
        return len(self.feature) - 1

    def fit(self, X, y) -> "DecisionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be 2-D with one row per label")
        if len(y) < 2:
            raise ValueError("need at least two rows")
        self.n_features = X.shape[1]
        self.single_class = len(np.unique(y)) < 2
        for attr in ("feature", "threshold", "left", "right", "value", "depth"):
            setattr(self, attr, [])
        stack = [(np.arange(len(y)), 0, None, None)]
        while stack:
            idx, d, parent, side = stack.pop()
            yn = y[idx]
            n1 = int(yn.sum())
            node = self._new((len(idx) - n1, n1), d)
            if parent is not None:
                (self.left if side == 0 else self.right)[parent] = node
            if d >= self.max_depth or n1 == 0 or n1 == len(idx) \
                    or len(idx) < 2 * self.min_samples_leaf:
                continue
            Xn = X[idx]
            order = np.argsort(Xn, axis=0, kind="stable")
            best = (np.inf, -1, 0.0, -1)
            for f in range(self.n_features):
                o = order[:, f]
                score, thr, pos = kernels.best_split(np.ascontiguousarray(Xn[o, f]),
                                                     np.ascontiguousarray(yn[o]),
                                                     self.min_samples_leaf)
                if pos >= 0 and score < best[0]:
                    best = (score, f, thr, pos)
            if best[1] < 0:
                continue
            _, f, thr, _ = best
            self.feature[node] = f
            self.threshold[node] = thr
            go_left = Xn[:, f] <= thr
            # right pushed first so the left subtree is numbered first
            stack.append((idx[~go_left], d + 1, node, 1))
            stack.append((idx[go_left], d + 1, node, 0))
        return self

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        active = feat[node] >= 0
        while active.any():
            i = np.flatnonzero(active)
            nd = node[i]
            go = X[i, feat[nd]] <= thr[nd]
            node[i] = np.where(go, left[nd], right[nd])
            active = feat[node] >= 0
        return node

    def predict_proba(self, X) -> np.ndarray:
        """Probability of class 1 (leaf frequency)."""
        v = np.asarray(self.value, dtype=float)
        leaf = self.apply(X)
        return v[leaf, 1] / v[leaf].sum(axis=1)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int8)


def train_tree(X, y, max_depth: int = 5, min_samples_leaf: int = 1) -> DecisionTree:
    """Fit a tree; single-class input yields one leaf with ``single_class`` set."""
    return DecisionTree(max_depth=max_depth, min_samples_leaf=min_samples_leaf).fit(X, y)


def gini_importance(tree: DecisionTree, n_features: int | None = None) -> np.ndarray:
    """Normalised sample-weighted impurity decrease per feature.

    When splits exist but none reduces impurity, each split counts once so
    the vector still sums to one.
    """
    n_features = tree.n_features if n_features is None else n_features
    imp = np.zeros(n_features)
    used = np.zeros(n_features)
    for i, f in enumerate(tree.feature):
        if f < 0:
            continue
        n0, n1 = tree.value[i]
        l0, l1 = tree.value[tree.left[i]]
        r0, r1 = tree.value[tree.right[i]]
        dec = (n0 + n1) * gini(n0, n1) - (l0 + l1) * gini(l0, l1) - (r0 + r1) * gini(r0, r1)
        imp[f] += max(dec, 0.0)
        used[f] += 1
    total = imp.sum()
    if total > 1e-12:
        return imp / total
    if used.sum() > 0:
        return used / used.sum()
    return imp
