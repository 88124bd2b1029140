"""Isolation forest with axis-aligned random splits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, TooFewPoints
from .store import unwrap

EULER_GAMMA = 0.5772156649


def average_path_length(n):
    """c(n): expected unsuccessful-search path length in a BST of n nodes.

    c(1) = c(0) = 0 and c(2) = 1 by convention.
    """
    n_arr = np.asarray(n, dtype=np.float64)
    out = np.zeros_like(n_arr)
    big = n_arr > 2
    m = n_arr[big]
    out[big] = 2.0 * (np.log(m - 1.0) + EULER_GAMMA) - 2.0 * (m - 1.0) / m
    out[n_arr == 2] = 1.0
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class IsolationTree:
    # per-node arrays; feature == -1 marks a leaf
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray

    @property
    def height(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for node in range(len(self.feature)):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())


@dataclass(frozen=True, eq=False)
class IsolationForest:
    trees: list
    psi: int
    dim: int

    @property
    def c_psi(self) -> float:
        return average_path_length(self.psi)


def _grow_tree(points: np.ndarray, height_limit: int, rng: np.random.Generator) -> IsolationTree:
    feature, threshold, left, right, size = [], [], [], [], []

    def new_node(n):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(n)
        return len(feature) - 1

    root = new_node(len(points))
    stack = [(root, points, 0)]
    while stack:
        node, pts, depth = stack.pop()
        if len(pts) <= 1 or depth >= height_limit:
            continue
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        varying = np.flatnonzero(hi > lo)
        if varying.size == 0:
            continue
        attr = int(varying[rng.integers(varying.size)])
        split = float(rng.uniform(lo[attr], hi[attr]))
        go_left = pts[:, attr] < split
        feature[node] = attr
        threshold[node] = split
        left[node] = new_node(int(go_left.sum()))
        right[node] = new_node(int((~go_left).sum()))
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], pts[~go_left], depth + 1))
        stack.append((left[node], pts[go_left], depth + 1))
    return IsolationTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(size, dtype=np.int64),
    )


def iforest_fit(refs, n_trees: int = 100, subsample: int | None = None, seed=0) -> IsolationForest:
    """Fit ``n_trees`` isolation trees, each on its own subsample of ``refs``.

    Tree ``t`` draws from ``SeedSequence([*seed, t])`` so trees can be grown in
    any order and the forest is still a pure function of ``seed`` (an int or
    a tuple of ints).
    """
    seed_words = [int(s) for s in np.atleast_1d(seed)]
    x = np.asarray(unwrap(refs), dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise TooFewPoints(f"isolation forest needs at least 2 points, got {n}")
    psi = min(256, n) if subsample is None else min(subsample, n)
    height_limit = math.ceil(math.log2(psi))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([*seed_words, t]))
        rows = np.sort(rng.choice(n, size=psi, replace=False))
        trees.append(_grow_tree(x[rows], height_limit, rng))
    return IsolationForest(trees, psi, x.shape[1])


def path_lengths(forest: IsolationForest, queries) -> np.ndarray:
    """Mean adjusted path length E[h(x)] over the forest, one per query."""
    x = np.atleast_2d(np.asarray(unwrap(queries), dtype=np.float64))
    if x.shape[1] != forest.dim:
        raise DimMismatch(f"query dim {x.shape[1]} != forest dim {forest.dim}")
    total = np.zeros(x.shape[0])
    rows = np.arange(x.shape[0])
    for tree in forest.trees:
        node = np.zeros(x.shape[0], dtype=np.int64)
        depth = np.zeros(x.shape[0])
        active = tree.feature[node] >= 0
        while active.any():
            idx = rows[active]
            cur = node[idx]
            go_left = x[idx, tree.feature[cur]] < tree.threshold[cur]
            node[idx] = np.where(go_left, tree.left[cur], tree.right[cur])
            depth[idx] += 1.0
            active = tree.feature[node] >= 0
        total += depth + average_path_length(tree.size[node])
    return total / len(forest.trees)


def iforest_score(forest: IsolationForest, queries):
    """Anomaly score ``2 ** (-E[h(x)] / c(psi))`` in (0, 1)."""
    single = np.ndim(unwrap(queries)) == 1
    scores = np.exp2(-path_lengths(forest, queries) / forest.c_psi)
    return float(scores[0]) if single else scores
