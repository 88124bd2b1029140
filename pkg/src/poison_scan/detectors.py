"""Local outlier scores computed from k-NN radii.

All scores follow one convention: larger means more anomalous. Radii are
floored at ``epsilon`` before any ratio or logarithm so exact duplicates
still produce finite scores.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, KTooSmall
from .knn import NeighborSet
from .store import Detector

DAO_TERM_CEILING = 1e300


@dataclass(frozen=True)
class DetectorConfig:
    kind: Detector = Detector.DAO
    k: int = 16
    epsilon: float = 1e-12
    lid_cap: float = 1e6
    # "k" averages the log-ratios over all k radii, "k-1" drops the zero i=k term
    lid_normalization: str = "k"
    iforest_trees: int = 100
    iforest_subsample: int | None = None  # None -> min(256, reference-set size)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Detector.parse(self.kind))
        if self.k < 1:
            raise InvalidConfig("k must be >= 1")
        if not self.epsilon > 0:
            raise InvalidConfig("epsilon must be > 0")
        if not self.lid_cap > 0:
            raise InvalidConfig("lid_cap must be > 0")
        if self.iforest_trees < 1:
            raise InvalidConfig("iforest_trees must be >= 1")
        if self.iforest_subsample is not None and self.iforest_subsample < 2:
            raise InvalidConfig("iforest_subsample must be >= 2")
        if self.lid_normalization not in ("k", "k-1"):
            raise InvalidConfig("lid_normalization must be 'k' or 'k-1'")
        if self.kind in (Detector.LID, Detector.DAO) and self.k < 2:
            raise KTooSmall(f"{self.kind.name} needs k >= 2")


def _radii(ns) -> tuple[np.ndarray, bool]:
    d = ns.distances if isinstance(ns, NeighborSet) else np.asarray(ns, dtype=np.float64)
    if d.ndim == 1:
        return d[None, :], True
    return d, False


def _out(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


def score_kdist(ns):
    r, single = _radii(ns)
    return _out(r[:, -1].copy(), single)


def estimate_lid_mle(ns, epsilon: float = 1e-12, lid_cap: float = 1e6, normalization: str = "k"):
    """Maximum-likelihood LID from the k nearest radii.

    ``-(1/k * sum_i ln(r_i / r_k))^-1`` with radii floored at ``epsilon``;
    clamped to ``(0, lid_cap]`` and equal to ``lid_cap`` when all radii match.
    """
    r, single = _radii(ns)
    k = r.shape[1]
    if k < 2:
        raise KTooSmall("LID estimation needs k >= 2")
    r = np.maximum(r, epsilon)
    log_sum = np.log(r / r[:, -1:]).sum(axis=1)
    denom = k if normalization == "k" else k - 1
    with np.errstate(divide="ignore"):
        lid = -denom / log_sum
    lid = np.where(log_sum < 0, np.minimum(lid, lid_cap), lid_cap)
    return _out(lid, single)


def score_lid(ns, epsilon: float = 1e-12, lid_cap: float = 1e6, normalization: str = "k"):
    return estimate_lid_mle(ns, epsilon, lid_cap, normalization)


def _kdist_ratio(query_kdist, neighbor_kdists, epsilon):
    nk = np.asarray(neighbor_kdists, dtype=np.float64)
    single = nk.ndim == 1
    nk = np.atleast_2d(nk)
    qk = np.asarray(query_kdist, dtype=np.float64).reshape(-1, 1)
    return np.maximum(qk, epsilon) / np.maximum(nk, epsilon), single


def score_slof(query_ns, neighbor_kdists, epsilon: float = 1e-12):
    """Mean over the k neighbours of ``kdist(q) / kdist(o)``.

    ``query_ns`` is a NeighborSet, a single query's radii, or the query
    k-distances themselves; ``neighbor_kdists`` has one row per query.
    """
    ratio, single = _kdist_ratio(_query_kdist_any(query_ns, neighbor_kdists), neighbor_kdists, epsilon)
    return _out(ratio.mean(axis=1), single)


def score_dao(query_ns, neighbor_kdists, neighbor_lids, epsilon: float = 1e-12):
    """Mean over the k neighbours of ``(kdist(q) / kdist(o)) ** LID(o)``."""
    ratio, single = _kdist_ratio(_query_kdist_any(query_ns, neighbor_kdists), neighbor_kdists, epsilon)
    lids = np.atleast_2d(np.asarray(neighbor_lids, dtype=np.float64))
    ratio = np.clip(ratio, epsilon, 1.0 / epsilon)
    with np.errstate(over="ignore"):
        terms = np.minimum(ratio ** lids, DAO_TERM_CEILING)
    return _out(terms.mean(axis=1), single)


def _query_kdist_any(query_ns, neighbor_kdists):
    """Resolve the query k-distance(s) against the shape of ``neighbor_kdists``."""
    if isinstance(query_ns, NeighborSet):
        return query_ns.distances[:, -1]
    q = np.asarray(query_ns, dtype=np.float64)
    if np.ndim(neighbor_kdists) == 1:
        # one query: either its radii vector or its scalar k-dist
        return q.reshape(-1)[-1:]
    if q.ndim == 2:
        return q[:, -1]
    return q
