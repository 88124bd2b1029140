"""Batched scoring of a whole dataset.

Each image embedding is scored against a reference set made of the image
and text embeddings of one batch. In ``partition`` mode the dataset is
shuffled once and cut into batches, so every sample is scored against its
own batch. ``resample`` mode draws a fresh batch around every sample.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .detectors import DetectorConfig, estimate_lid_mle, score_dao, score_slof
from .errors import CountMismatch, DatasetTooSmall, DimMismatch, InvalidConfig, KTooLarge
from .iforest import iforest_fit, iforest_score
from .knn import NeighborSet, knn
from .store import Detector, EmbeddingMatrix, LabelVector, ScoreVector, unwrap

_RESAMPLE_JOB = 256


class BatchMode(str, enum.Enum):
    PARTITION = "partition"
    RESAMPLE = "resample"


@dataclass(frozen=True, eq=False)
class BatchPlan:
    mode: BatchMode
    batch_size: int
    seed: int
    n: int
    # partition mode: sorted sample indices of every batch
    batches: list = field(default_factory=list)

    def resample_batch(self, i: int) -> np.ndarray:
        """Batch for sample ``i`` in resample mode; ``i`` is always first."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, i]))
        m = min(self.batch_size, self.n) - 1
        others = rng.choice(self.n - 1, size=m, replace=False)
        others[others >= i] += 1
        return np.concatenate([[i], np.sort(others)])

    @property
    def min_batch(self) -> int:
        if self.mode is BatchMode.PARTITION:
            return min(len(b) for b in self.batches)
        return min(self.batch_size, self.n)


def plan_batches(n: int, batch_size: int = 2048, seed: int = 0, mode="partition", k: int = 16) -> BatchPlan:
    mode = BatchMode(mode)
    if n < k + 1:
        raise DatasetTooSmall(f"{n} samples cannot support k={k} with self-exclusion")
    if batch_size < k + 1:
        raise InvalidConfig(f"batch_size {batch_size} must be at least k+1={k + 1}")
    if mode is BatchMode.RESAMPLE:
        return BatchPlan(mode, batch_size, seed, n)
    perm = np.random.default_rng(seed).permutation(n)
    chunks = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < k + 1:
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    return BatchPlan(mode, batch_size, seed, n, [np.sort(c) for c in chunks])


@dataclass(frozen=True, eq=False)
class DatasetHandle:
    image: EmbeddingMatrix
    text: EmbeddingMatrix | None = None
    labels: LabelVector | None = None

    def __post_init__(self):
        if self.text is not None:
            if self.text.count != self.image.count:
                raise CountMismatch(f"{self.image.count} images but {self.text.count} texts")
            if self.text.dim != self.image.dim:
                raise DimMismatch(f"image dim {self.image.dim} != text dim {self.text.dim}")
        if self.labels is not None and self.labels.count != self.image.count:
            raise CountMismatch(f"{self.image.count} images but {self.labels.count} labels")

    @property
    def count(self) -> int:
        return self.image.count


def build_reference_set(image_rows, text_rows=None):
    """Stack a batch's image rows and (optionally) its text rows.

    Returns the float64 reference block and, for each image row, the slot
    it occupies in that block (used for self-exclusion).
    """
    img = np.asarray(unwrap(image_rows), dtype=np.float64)
    if text_rows is None:
        refs = img
    else:
        txt = np.asarray(unwrap(text_rows), dtype=np.float64)
        if txt.shape[1] != img.shape[1]:
            raise DimMismatch(f"image dim {img.shape[1]} != text dim {txt.shape[1]}")
        refs = np.concatenate([img, txt])
    return refs, np.arange(img.shape[0])


def reference_scores(refs: np.ndarray, query_slots: np.ndarray, kinds, ks, cfg: DetectorConfig, iforest_seed=None) -> dict:
    """Scores of ``refs[query_slots]`` against ``refs`` for every (kind, k).

    One k-NN pass at ``max(ks)`` serves every smaller k, since the k-NN list
    at a smaller k is a prefix of the longer one.
    """
    kinds = [Detector.parse(x) for x in kinds]
    out = {}
    local = [x for x in kinds if x is not Detector.IFOREST]
    if local:
        k_max = max(ks)
        need_nbrs = Detector.SLOF in local or Detector.DAO in local
        if need_nbrs and len(query_slots) * 2 >= len(refs):
            # most reference points will be someone's neighbour: do them all at once
            all_slots = np.arange(len(refs))
            nbr_ns = knn(refs, refs, k_max, self_index=all_slots)
            q_ns = NeighborSet(nbr_ns.distances[query_slots], nbr_ns.indices[query_slots])
            lookup = q_ns.indices
        else:
            q_ns = knn(refs[query_slots], refs, k_max, self_index=query_slots)
            if need_nbrs:
                nbr_slots = np.unique(q_ns.indices)
                nbr_ns = knn(refs[nbr_slots], refs, k_max, self_index=nbr_slots)
                lookup = np.searchsorted(nbr_slots, q_ns.indices)
        for k in ks:
            qk = q_ns.prefix(k)
            q_kdist = qk.distances[:, -1]
            if need_nbrs:
                nk = nbr_ns.prefix(k)
                nbr_kdist = nk.distances[:, -1][lookup[:, :k]]
            for kind in local:
                if kind is Detector.KDIST:
                    s = q_kdist.copy()
                elif kind is Detector.LID:
                    s = estimate_lid_mle(qk, cfg.epsilon, cfg.lid_cap, cfg.lid_normalization)
                elif kind is Detector.SLOF:
                    s = score_slof(q_kdist, nbr_kdist, cfg.epsilon)
                else:
                    nbr_lid = estimate_lid_mle(nk, cfg.epsilon, cfg.lid_cap, cfg.lid_normalization)[lookup[:, :k]]
                    s = score_dao(q_kdist, nbr_kdist, nbr_lid, cfg.epsilon)
                out[(kind, k)] = s
    if Detector.IFOREST in kinds:
        forest = iforest_fit(refs, cfg.iforest_trees, cfg.iforest_subsample,
                             seed=cfg.seed if iforest_seed is None else iforest_seed)
        s = iforest_score(forest, refs[query_slots])
        for k in ks:
            out[(Detector.IFOREST, k)] = s
    return out


def _gather(m: EmbeddingMatrix | None, rows: np.ndarray):
    return None if m is None else m.data[rows]


def score_dataset_multi(handle: DatasetHandle, cfg: DetectorConfig, plan: BatchPlan, kinds, ks, threads: int = 1) -> dict:
    """Like :func:`score_dataset` but for several detectors and k at once."""
    if plan.n != handle.count:
        raise CountMismatch(f"plan covers {plan.n} samples, dataset has {handle.count}")
    kinds = [Detector.parse(x) for x in kinds]
    refs_per_batch = plan.min_batch * (2 if handle.text is not None else 1)
    if any(x is not Detector.IFOREST for x in kinds) and max(ks) + 1 > refs_per_batch:
        raise KTooLarge(f"k={max(ks)} needs reference sets of at least {max(ks) + 1}, smallest is {refs_per_batch}")
    out = {(kind, k): np.empty(handle.count) for kind in kinds for k in ks}

    def run_partition(b: int):
        rows = plan.batches[b]
        refs, slots = build_reference_set(_gather(handle.image, rows), _gather(handle.text, rows))
        res = reference_scores(refs, slots, kinds, ks, cfg, iforest_seed=(cfg.seed, b))
        for key, s in res.items():
            out[key][rows] = s

    def run_resample(start: int):
        for i in range(start, min(start + _RESAMPLE_JOB, plan.n)):
            rows = plan.resample_batch(i)
            refs, _ = build_reference_set(_gather(handle.image, rows), _gather(handle.text, rows))
            res = reference_scores(refs, np.array([0]), kinds, ks, cfg, iforest_seed=(cfg.seed, i))
            for key, s in res.items():
                out[key][i] = s[0]

    if plan.mode is BatchMode.PARTITION:
        job, jobs = run_partition, range(len(plan.batches))
    else:
        job, jobs = run_resample, range(0, plan.n, _RESAMPLE_JOB)
    if threads <= 1:
        for j in jobs:
            job(j)
    else:
        with threadpool_limits(limits=1), ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(job, jobs))
    return out


def score_dataset(handle: DatasetHandle, det: DetectorConfig, plan: BatchPlan, threads: int = 1) -> ScoreVector:
    """Score every image embedding with ``det.kind`` (higher = more suspicious)."""
    res = score_dataset_multi(handle, det, plan, [det.kind], [det.k], threads)
    return ScoreVector(res[(det.kind, det.k)], det.kind)
