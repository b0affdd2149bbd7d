"""Isolation Forest (Liu, Ting & Zhou 2008), array-backed trees.

Each tree is grown on a random subsample of ``psi`` rows. Internal nodes
split a randomly chosen feature at a uniform point between the node-local
min and max; growth stops at depth ``ceil(log2 psi)`` or when a node can no
longer be split. A leaf holding ``n`` rows contributes ``c(n)`` to the path
length, the average unsuccessful-search depth of a binary search tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .numerics import Rng

EULER_GAMMA = 0.5772156649015329
_TABLE_SIZE = 1 << 16
_HARMONIC = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, _TABLE_SIZE + 1))])


def harmonic(n):
    """H(n) = 1 + 1/2 + ... + 1/n, with H(0) = 0.

    Summed exactly for n up to 65536, via digamma beyond.
    """
    n = np.asarray(n, dtype=float)
    small = n <= _TABLE_SIZE
    table = _HARMONIC[np.clip(n, 0, _TABLE_SIZE).astype(np.intp)]
    out = np.where(small, table, digamma(n + 1.0) + EULER_GAMMA)
    return out if out.ndim else float(out)


def average_path_length(n):
    """c(n) = 2 H(n-1) - 2 (n-1)/n, with c(1) = c(0) = 0."""
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(n > 1, 2.0 * harmonic(np.maximum(n - 1.0, 0.0)) - 2.0 * (n - 1.0) / n, 0.0)
    return out if out.ndim else float(out)


@dataclass
class IsolationTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    def path_length(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.intp)
        rows = np.arange(len(x))
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            a = rows[active]
            n = node[active]
            go_left = x[a, feat[active]] < self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
        return self.depth[node] + average_path_length(self.size[node])


def _grow_tree(x: np.ndarray, height_limit: int, rng: Rng) -> IsolationTree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, d):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(n)
        depth.append(d)
        return len(feature) - 1

    stack = [(new_node(len(x), 0), np.arange(len(x)))]
    while stack:
        node, idx = stack.pop()
        d = depth[node]
        if d >= height_limit or len(idx) <= 1:
            continue
        sub = x[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if splittable.size == 0:
            continue  # all rows identical
        q = int(splittable[rng.integers(0, splittable.size)])
        p = rng.uniform(lo[q], hi[q])
        mask = sub[:, q] < p
        l_idx, r_idx = idx[mask], idx[~mask]
        feature[node] = q
        threshold[node] = p
        left[node] = new_node(len(l_idx), d + 1)
        right[node] = new_node(len(r_idx), d + 1)
        stack.append((right[node], r_idx))
        stack.append((left[node], l_idx))

    return IsolationTree(
        np.asarray(feature, dtype=np.intp),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.intp),
        np.asarray(right, dtype=np.intp),
        np.asarray(size, dtype=float),
        np.asarray(depth, dtype=float),
    )


@dataclass
class IsolationForest:
    trees: list[IsolationTree]
    psi: int
    n_features: int

    @property
    def normalizer(self) -> float:
        return average_path_length(self.psi)

    @property
    def height_limit(self) -> int:
        return math.ceil(math.log2(self.psi))

    def expected_path_length(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise ValueError(f"dimension mismatch: forest has {self.n_features} features, got {x.shape[1]}")
        return np.mean([tree.path_length(x) for tree in self.trees], axis=0)

    def score(self, x) -> np.ndarray:
        """Anomaly score in (0, 1); larger means easier to isolate."""
        return score_from_path_length(self.expected_path_length(x), self.psi)


def score_from_path_length(mean_path, psi: int):
    return np.power(2.0, -np.asarray(mean_path, dtype=float) / average_path_length(psi))


def fit_isolation_forest(x, n_trees: int = 100, psi: int | None = None, rng: Rng | None = None) -> IsolationForest:
    """Grow ``n_trees`` isolation trees; ``psi`` defaults to ``min(256, N)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {x.shape}")
    n = len(x)
    psi = min(256, n) if psi is None else int(psi)
    if n_trees < 1:
        raise ValueError("need at least one tree")
    if psi > n:
        raise ValueError(f"subsample size {psi} exceeds number of rows {n}")
    if psi < 2:
        raise ValueError("subsample size must be >= 2")
    rng = rng or Rng(0)
    limit = math.ceil(math.log2(psi))
    trees = []
    for i in range(n_trees):
        stream = rng.child(i)
        rows = stream.choice(n, psi, replace=False)
        trees.append(_grow_tree(x[rows], limit, stream))
    return IsolationForest(trees, psi, x.shape[1])
