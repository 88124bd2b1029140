"""Synthetic clean/backdoor embedding datasets and the controlled experiments.

Clean samples come from a mixture of isotropic Gaussians centred on random
unit vectors; poisoned samples come from one much tighter Gaussian placed a
fixed chord distance away from its nearest clean centroid. Every row is
projected back onto the unit sphere. ``sigma`` values are the expected norm
of the noise vector, i.e. each coordinate has std ``sigma / sqrt(d)``, so the
geometry does not change with the embedding dimension.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .detectors import DetectorConfig
from .errors import InvalidConfig
from .metrics import auc
from .pipeline import DatasetHandle, plan_batches, reference_scores, build_reference_set, score_dataset_multi
from .store import Detector, EmbeddingMatrix, LabelVector

_CHUNK_ROWS = 1 << 15


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 10_000
    d: int = 512
    n_clusters: int = 50
    poison_rate: float = 0.0001
    sigma_clean: float = 0.2
    sigma_backdoor: float = 0.02
    backdoor_offset: float = 5.0
    with_text: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 2 or self.n_clusters < 1:
            raise InvalidConfig("need n >= 1, d >= 2 and n_clusters >= 1")
        if not 0.0 <= self.poison_rate <= 0.2:
            raise InvalidConfig("poison_rate must lie in [0, 0.2]")
        if self.poison_rate > 0 and self.n_backdoor < 1:
            raise InvalidConfig(f"poison_rate {self.poison_rate} yields no backdoor rows for n={self.n}")
        if not 0 < self.sigma_backdoor < self.sigma_clean:
            raise InvalidConfig("need 0 < sigma_backdoor < sigma_clean")
        if not 0 < self.backdoor_offset * self.sigma_clean < 2:
            raise InvalidConfig("backdoor_offset * sigma_clean must be a chord length in (0, 2)")

    @property
    def n_backdoor(self) -> int:
        return round(self.poison_rate * self.n)


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Geometry:
    centroids: np.ndarray
    backdoor_centroid: np.ndarray

    @classmethod
    def from_config(cls, cfg: SyntheticConfig) -> "Geometry":
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
        centroids = _unit(rng.standard_normal((cfg.n_clusters, cfg.d)))
        chord = cfg.backdoor_offset * cfg.sigma_clean
        angle = 2.0 * math.asin(chord / 2.0)
        anchor = centroids[0]
        for _ in range(1000):
            u = rng.standard_normal(cfg.d)
            u = _unit(u - (u @ anchor) * anchor)
            b = math.cos(angle) * anchor + math.sin(angle) * u
            # the anchor has to stay the nearest clean centroid
            if np.linalg.norm(centroids - b, axis=1).min() >= chord - 1e-12:
                return cls(centroids, b)
        raise InvalidConfig("could not place the backdoor centroid; lower n_clusters or backdoor_offset")

    def draw(self, backdoor: np.ndarray, clusters: np.ndarray, cfg: SyntheticConfig, rng):
        """Image rows (and text rows when ``cfg.with_text``) for the given flags."""
        d = cfg.d
        centres = np.where(backdoor[:, None], self.backdoor_centroid, self.centroids[clusters])
        sigma = np.where(backdoor, cfg.sigma_backdoor, cfg.sigma_clean)[:, None] / math.sqrt(d)
        image = _unit(centres + sigma * rng.standard_normal((len(backdoor), d)))
        text = None
        if cfg.with_text:
            jitter = cfg.sigma_clean / 2.0 / math.sqrt(d)
            text = _unit(image + jitter * rng.standard_normal((len(backdoor), d)))
        return image, text


def generate(cfg: SyntheticConfig):
    """Return ``(image, text or None, labels)`` for ``cfg``; fully seeded."""
    geo = Geometry.from_config(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    flags = np.zeros(cfg.n, dtype=np.uint8)
    flags[rng.choice(cfg.n, size=cfg.n_backdoor, replace=False)] = 1
    clusters = rng.integers(cfg.n_clusters, size=cfg.n)

    image = np.empty((cfg.n, cfg.d), dtype=np.float32)
    text = np.empty((cfg.n, cfg.d), dtype=np.float32) if cfg.with_text else None
    for c, start in enumerate(range(0, cfg.n, _CHUNK_ROWS)):
        stop = min(start + _CHUNK_ROWS, cfg.n)
        chunk_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, c]))
        img, txt = geo.draw(flags[start:stop].astype(bool), clusters[start:stop], cfg, chunk_rng)
        image[start:stop] = img
        if text is not None:
            text[start:stop] = txt
    return (
        EmbeddingMatrix(image, normalized=True),
        None if text is None else EmbeddingMatrix(text, normalized=True),
        LabelVector(flags),
    )


@dataclass(frozen=True)
class KdistSummary:
    backdoor_count: int
    clean_median: float
    clean_q1: float
    clean_q3: float
    backdoor_median: float
    backdoor_q1: float
    backdoor_q3: float


def kdist_distribution_experiment(cfg: SyntheticConfig, batch_size: int = 1024, k: int = 16,
                                  backdoor_counts=(1, 5, 10, 50)) -> list[KdistSummary]:
    """k-dist of clean vs. poisoned points in one batch, per number of poisoned points.

    The same clean and poisoned pools are reused for every count, so rows
    differ between counts only in how many poisoned points replace clean ones.
    """
    if any(c < 1 or c > batch_size // 2 for c in backdoor_counts):
        raise InvalidConfig("backdoor counts must lie in [1, batch_size/2]")
    geo = Geometry.from_config(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
    c_max = max(backdoor_counts)
    clean_img, clean_txt = geo.draw(np.zeros(batch_size, bool), rng.integers(cfg.n_clusters, size=batch_size), cfg, rng)
    bd_img, bd_txt = geo.draw(np.ones(c_max, bool), np.zeros(c_max, int), cfg, rng)
    det = DetectorConfig(Detector.KDIST, k=k)
    out = []
    for c in backdoor_counts:
        img = np.concatenate([clean_img[: batch_size - c], bd_img[:c]])
        txt = None if clean_txt is None else np.concatenate([clean_txt[: batch_size - c], bd_txt[:c]])
        refs, slots = build_reference_set(img, txt)
        kd = reference_scores(refs, slots, [Detector.KDIST], [k], det)[(Detector.KDIST, k)]
        clean, bd = kd[: batch_size - c], kd[batch_size - c:]
        cq = np.percentile(clean, [25, 50, 75])
        bq = np.percentile(bd, [25, 50, 75])
        out.append(KdistSummary(c, float(cq[1]), float(cq[0]), float(cq[2]),
                                float(bq[1]), float(bq[0]), float(bq[2])))
    return out


@dataclass(frozen=True)
class SweepRow:
    detector: str
    rate: float
    k: int
    auc: float


def poison_rate_sensitivity_sweep(cfg: SyntheticConfig, rates, k_values,
                                  detectors=("lid", "kdist", "slof", "dao"),
                                  batch_size: int = 2048, threads: int = 1) -> list[SweepRow]:
    """Detection AUC for every (detector, poisoning rate, k) on synthetic data."""
    if any(not 0.0001 <= r <= 0.10 for r in rates):
        raise InvalidConfig("rates must lie in [0.0001, 0.10]")
    kinds = [Detector.parse(x) for x in detectors]
    rows = []
    for rate in rates:
        image, text, labels = generate(replace(cfg, poison_rate=rate))
        handle = DatasetHandle(image, text, labels)
        plan = plan_batches(cfg.n, batch_size, cfg.seed, "partition", k=max(k_values))
        det = DetectorConfig(Detector.KDIST, k=max(k_values), seed=cfg.seed)
        scores = score_dataset_multi(handle, det, plan, kinds, list(k_values), threads)
        for kind in kinds:
            for k in k_values:
                rows.append(SweepRow(kind.name.lower(), rate, k, auc(scores[(kind, k)], labels)))
    return rows


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["detector", "rate", "k", "auc"])
        for r in rows:
            w.writerow([r.detector, repr(r.rate), r.k, repr(r.auc)])
