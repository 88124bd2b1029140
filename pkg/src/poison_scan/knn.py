"""Exact batched k-nearest-neighbour search (Euclidean).

Candidates are pre-selected with the GEMM expansion ``|q|^2 + |r|^2 - 2 q.r``,
then every candidate distance is recomputed from the coordinate differences.
A row is accepted only when the rounding bound of the expansion proves that no
excluded reference can beat the k-th refined distance; otherwise that row is
redone exhaustively. Returned distances therefore never depend on the GEMM
rounding, which makes results independent of BLAS threading.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, KTooLarge
from .store import unwrap

_QUERY_CHUNK = 512
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class NeighborSet:
    """k-NN of a block of queries.

    ``distances`` and ``indices`` have shape ``(n_queries, k)``; each row is
    ascending in distance with ties ordered by reference index.
    """

    distances: np.ndarray
    indices: np.ndarray

    @property
    def k(self) -> int:
        return self.distances.shape[1]

    def __len__(self) -> int:
        return self.distances.shape[0]

    def prefix(self, k: int) -> "NeighborSet":
        return NeighborSet(self.distances[:, :k], self.indices[:, :k])


def _as_2d_f64(x) -> np.ndarray:
    a = np.asarray(unwrap(x), dtype=np.float64)
    return a.reshape(1, -1) if a.ndim == 1 else a


def _sq_dist(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Squared distances from the coordinate differences; broadcasts over leading axes.

    The reduction runs over the contiguous last axis, so each pair's value is
    independent of how many other pairs are computed alongside it. ``knn``
    inlines the same arithmetic (``r - q``, square, sum) for its candidates.
    """
    diff = r - q
    diff *= diff
    return diff.sum(axis=-1)


def pairwise_distances(queries, refs) -> np.ndarray:
    """Full ``|queries| x |refs|`` Euclidean distance block, computed exactly."""
    q = _as_2d_f64(queries)
    r = _as_2d_f64(refs)
    if q.shape[1] != r.shape[1]:
        raise DimMismatch(f"query dim {q.shape[1]} != reference dim {r.shape[1]}")
    out = np.empty((q.shape[0], r.shape[0]), dtype=np.float64)
    for start in range(0, q.shape[0], 64):
        out[start:start + 64] = np.sqrt(_sq_dist(q[start:start + 64, None, :], r[None, :, :]))
    return out


def _exact_row(q: np.ndarray, r: np.ndarray, k: int, self_idx: int):
    d2 = _sq_dist(q[None, :], r)
    if self_idx >= 0:
        d2[self_idx] = np.inf
    order = np.lexsort((np.arange(r.shape[0]), d2))[:k]
    return d2[order], order


def knn(queries, refs, k: int, self_index=None) -> NeighborSet:
    """k nearest references of every query.

    ``self_index`` maps each query row to its own reference slot (or -1 for
    none); that slot is skipped. Self-exclusion is by index, so an exact
    duplicate elsewhere in ``refs`` still counts as a neighbour at distance 0.
    """
    q = _as_2d_f64(queries)
    r = _as_2d_f64(refs)
    if q.shape[1] != r.shape[1]:
        raise DimMismatch(f"query dim {q.shape[1]} != reference dim {r.shape[1]}")
    n_q, n_r = q.shape[0], r.shape[0]
    if self_index is not None:
        self_index = np.asarray(self_index, dtype=np.int64)
        if self_index.shape != (n_q,):
            raise ValueError("self_index must have one entry per query")
        available = n_r - (1 if np.any(self_index >= 0) else 0)
    else:
        self_index = np.full(n_q, -1, dtype=np.int64)
        available = n_r
    if k < 1:
        raise ValueError("k must be positive")
    if k > available:
        raise KTooLarge(f"k={k} but only {available} reference points are available")

    dist_out = np.empty((n_q, k), dtype=np.float64)
    idx_out = np.empty((n_q, k), dtype=np.int64)
    r_sq = np.einsum("ij,ij->i", r, r)
    r_sq_max = float(r_sq.max())
    n_cand = min(available, k + max(8, k // 2))
    has_self = self_index >= 0
    ref_order = np.arange(n_r)

    for start in range(0, n_q, _QUERY_CHUNK):
        stop = min(start + _QUERY_CHUNK, n_q)
        qb = q[start:stop]
        sb = self_index[start:stop]
        rows = np.arange(stop - start)
        q_sq = np.einsum("ij,ij->i", qb, qb)
        approx = qb @ r.T
        approx *= -2.0
        approx += r_sq
        approx += q_sq[:, None]
        approx[rows[has_self[start:stop]], sb[has_self[start:stop]]] = np.inf

        if n_cand < n_r:
            cand = np.argpartition(approx, n_cand - 1, axis=1)[:, :n_cand]
        else:
            cand = np.broadcast_to(ref_order, (stop - start, n_r)).copy()
        cand_approx = np.take_along_axis(approx, cand, axis=1)
        gathered = r[cand]
        gathered -= qb[:, None, :]
        gathered *= gathered
        exact = gathered.sum(axis=-1)
        del gathered
        exact[cand == sb[:, None]] = np.inf

        # sort candidates by (distance, reference index)
        order = np.lexsort((cand, exact), axis=1)[:, :k]
        top_d2 = np.take_along_axis(exact, order, axis=1)
        top_idx = np.take_along_axis(cand, order, axis=1)

        if n_cand < available:
            # |computed - true| for the expansion is below this bound (with ample slack)
            bound = 8.0 * (q.shape[1] + 4) * _EPS * (q_sq + r_sq_max + 1e-300)
            safe = top_d2[:, -1] < cand_approx.max(axis=1) - 2.0 * bound
            for row in np.flatnonzero(~safe):
                top_d2[row], top_idx[row] = _exact_row(qb[row], r, k, int(sb[row]))

        dist_out[start:stop] = np.sqrt(top_d2)
        idx_out[start:stop] = top_idx
    return NeighborSet(dist_out, idx_out)


def kdist(ns: NeighborSet) -> np.ndarray:
    """Distance to the k-th neighbour of every query."""
    return ns.distances[:, -1].copy()
