"""Turn scores into removal decisions and write purified datasets."""
from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import EmptyScores, IndexOutOfRange, InvalidConfig
from .store import LabelVector, save_embeddings, save_labels, unwrap


class PolicyKind(str, enum.Enum):
    TOP_FRACTION = "top_fraction"
    ABSOLUTE_THRESHOLD = "absolute_threshold"
    MEAN_PLUS_STD = "mean_plus_std"


@dataclass(frozen=True)
class FilterPolicy:
    kind: PolicyKind = PolicyKind.TOP_FRACTION
    fraction: float | None = 0.10
    threshold: float | None = None
    sigma_multiplier: float | None = None

    def __post_init__(self):
        kind = PolicyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        active = {
            PolicyKind.TOP_FRACTION: self.fraction,
            PolicyKind.ABSOLUTE_THRESHOLD: self.threshold,
            PolicyKind.MEAN_PLUS_STD: self.sigma_multiplier,
        }
        if active[kind] is None:
            raise InvalidConfig(f"{kind.value} policy needs its parameter")
        if kind is PolicyKind.TOP_FRACTION and not 0.0 < self.fraction < 1.0:
            raise InvalidConfig("fraction must lie in (0, 1)")

    @classmethod
    def top_fraction(cls, fraction: float) -> "FilterPolicy":
        return cls(PolicyKind.TOP_FRACTION, fraction=fraction)

    @classmethod
    def absolute(cls, threshold: float) -> "FilterPolicy":
        return cls(PolicyKind.ABSOLUTE_THRESHOLD, fraction=None, threshold=threshold)

    @classmethod
    def mean_plus_std(cls, sigma_multiplier: float) -> "FilterPolicy":
        return cls(PolicyKind.MEAN_PLUS_STD, fraction=None, sigma_multiplier=sigma_multiplier)


def select_removals(scores, policy: FilterPolicy) -> np.ndarray:
    """Sorted indices to remove. Ties in TopFraction go to the lower index."""
    s = np.asarray(unwrap(scores), dtype=np.float64)
    if s.size == 0:
        raise EmptyScores("no scores to filter")
    if policy.kind is PolicyKind.TOP_FRACTION:
        m = math.ceil(policy.fraction * s.size)
        order = np.lexsort((np.arange(s.size), -s))
        return np.sort(order[:m])
    if policy.kind is PolicyKind.ABSOLUTE_THRESHOLD:
        t = policy.threshold
    else:
        t = s.mean() + policy.sigma_multiplier * s.std()
    return np.flatnonzero(s >= t)


def purify(handle, removals, out_dir=None) -> np.ndarray:
    """Indices kept after removing ``removals``, ascending.

    With ``out_dir`` the kept rows are also written as ``image.emb``,
    ``text.emb`` (when present), ``labels.lbl`` (when present), plus
    ``removed.txt`` and ``kept.txt`` index lists.
    """
    n = handle.count
    removals = np.unique(np.asarray(removals, dtype=np.int64))
    if removals.size and (removals[0] < 0 or removals[-1] >= n):
        raise IndexOutOfRange(f"removal indices must lie in [0, {n})")
    keep = np.ones(n, dtype=bool)
    keep[removals] = False
    kept = np.flatnonzero(keep)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_index_list(os.path.join(out_dir, "removed.txt"), removals)
        write_index_list(os.path.join(out_dir, "kept.txt"), kept)
        if kept.size:
            save_embeddings(os.path.join(out_dir, "image.emb"), handle.image.data[kept])
            if handle.text is not None:
                save_embeddings(os.path.join(out_dir, "text.emb"), handle.text.data[kept])
        if handle.labels is not None:
            save_labels(os.path.join(out_dir, "labels.lbl"), LabelVector(handle.labels.flags[kept]))
    return kept


def write_index_list(path, indices) -> None:
    with open(path, "w") as f:
        f.writelines(f"{int(i)}\n" for i in indices)


def read_index_list(path) -> np.ndarray:
    with open(path) as f:
        return np.array([int(line) for line in f if line.strip()], dtype=np.int64)
