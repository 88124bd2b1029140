"""Binary embedding, label and score files.

Layouts (all little-endian):

    EMB1 | count:u32 | dim:u32 | count*dim float32, row-major
    LBL1 | count:u32 | count bytes in {0, 1}
    SCR1 | count:u32 | detector:u8 | count float64
"""
from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    CountMismatch,
    InvalidLabelValue,
    IoError,
    NonFiniteValue,
    TruncatedFile,
    ZeroDim,
    ZeroRow,
)

EMB_MAGIC = b"EMB1"
LBL_MAGIC = b"LBL1"
SCR_MAGIC = b"SCR1"

_CHUNK_ROWS = 1 << 16


class Detector(enum.IntEnum):
    KDIST = 0
    SLOF = 1
    LID = 2
    DAO = 3
    IFOREST = 4

    @classmethod
    def parse(cls, name: "str | Detector") -> "Detector":
        if isinstance(name, Detector):
            return name
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown detector {name!r}") from None


def _first_nonfinite(block: np.ndarray, row_offset: int) -> None:
    bad = ~np.isfinite(block)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise NonFiniteValue(int(r) + row_offset, int(c))


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """A read-only ``count x dim`` float32 matrix of sample embeddings."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        data = self.data
        if data.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ZeroDim(f"embedding matrix has shape {data.shape}")
        if data.dtype != np.float32:
            data = np.ascontiguousarray(data, dtype=np.float32)
            object.__setattr__(self, "data", data)
        if data.flags.writeable:
            data = data.view()
            data.flags.writeable = False
            object.__setattr__(self, "data", data)
        for start in range(0, data.shape[0], _CHUNK_ROWS):
            _first_nonfinite(data[start:start + _CHUNK_ROWS], start)
        if self.normalized:
            for start in range(0, data.shape[0], _CHUNK_ROWS):
                norms = np.linalg.norm(data[start:start + _CHUNK_ROWS].astype(np.float64), axis=1)
                if np.any(np.abs(norms - 1.0) > 1e-5):
                    raise ValueError("normalized flag set but rows are not unit norm")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def take(self, rows) -> "EmbeddingMatrix":
        return EmbeddingMatrix(np.asarray(self.data[rows]), normalized=self.normalized)


@dataclass(frozen=True, eq=False)
class LabelVector:
    """Ground truth flags: 0 = clean, 1 = backdoor."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.flags)
        if flags.ndim != 1:
            raise ValueError("labels must be 1-D")
        bad = np.flatnonzero((flags != 0) & (flags != 1))
        if bad.size:
            raise InvalidLabelValue(int(bad[0]), int(flags[bad[0]]))
        object.__setattr__(self, "flags", flags.astype(np.uint8))

    @property
    def count(self) -> int:
        return self.flags.shape[0]

    @property
    def n_backdoor(self) -> int:
        return int(self.flags.sum())

    @property
    def n_clean(self) -> int:
        return self.count - self.n_backdoor


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Per-sample anomaly scores; higher means more likely poisoned."""

    scores: np.ndarray
    detector: Detector = field(default=Detector.KDIST)

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        object.__setattr__(self, "detector", Detector.parse(self.detector))

    @property
    def count(self) -> int:
        return self.scores.shape[0]


def unwrap(x):
    """The raw array behind an EmbeddingMatrix, ScoreVector or LabelVector (else ``x``)."""
    if isinstance(x, EmbeddingMatrix):
        return x.data
    if isinstance(x, ScoreVector):
        return x.scores
    if isinstance(x, LabelVector):
        return x.flags
    return x


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"{what}: expected {n} bytes, got {len(buf)}")
    return buf


def _check_magic(f, magic: bytes, path) -> None:
    got = f.read(4)
    if got != magic:
        raise BadMagic(f"{path}: expected magic {magic!r}, found {got!r}")


def load_embeddings(path, mmap: bool = True) -> EmbeddingMatrix:
    """Load an EMB1 file. The payload is memory-mapped read-only by default."""
    size = os.path.getsize(path)
    with open(path, "rb") as f:
        _check_magic(f, EMB_MAGIC, path)
        count, dim = struct.unpack("<II", _read_exact(f, 8, "EMB1 header"))
    if dim == 0 or count == 0:
        raise ZeroDim(f"{path}: header declares count={count}, dim={dim}")
    expected = 12 + 4 * count * dim
    if size < expected:
        raise TruncatedFile(f"{path}: payload has {size - 12} bytes, header declares {expected - 12}")
    if size > expected:
        raise TruncatedFile(f"{path}: {size - expected} trailing bytes after declared payload")
    if mmap:
        data = np.memmap(path, dtype="<f4", mode="r", offset=12, shape=(count, dim))
    else:
        data = np.fromfile(path, dtype="<f4", offset=12).reshape(count, dim)
    return EmbeddingMatrix(data)


def save_embeddings(path, m: EmbeddingMatrix | np.ndarray) -> None:
    data = m.data if isinstance(m, EmbeddingMatrix) else np.asarray(m)
    count, dim = data.shape
    try:
        with open(path, "wb") as f:
            f.write(EMB_MAGIC + struct.pack("<II", count, dim))
            for start in range(0, count, _CHUNK_ROWS):
                f.write(np.ascontiguousarray(data[start:start + _CHUNK_ROWS], dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_labels(path, expected_count: int | None = None) -> LabelVector:
    with open(path, "rb") as f:
        _check_magic(f, LBL_MAGIC, path)
        (count,) = struct.unpack("<I", _read_exact(f, 4, "LBL1 header"))
        payload = _read_exact(f, count, "LBL1 payload")
        if f.read(1):
            raise TruncatedFile(f"{path}: trailing bytes after declared payload")
    if expected_count is not None and count != expected_count:
        raise CountMismatch(f"{path}: {count} labels, expected {expected_count}")
    return LabelVector(np.frombuffer(payload, dtype=np.uint8).copy())


def save_labels(path, labels: LabelVector | np.ndarray) -> None:
    flags = labels.flags if isinstance(labels, LabelVector) else LabelVector(labels).flags
    try:
        with open(path, "wb") as f:
            f.write(LBL_MAGIC + struct.pack("<I", flags.shape[0]) + flags.tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc


def l2_normalize(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit L2 norm (norms taken in float64)."""
    out = np.empty(m.data.shape, dtype=np.float32)
    for start in range(0, m.count, _CHUNK_ROWS):
        block = m.data[start:start + _CHUNK_ROWS].astype(np.float64)
        norms = np.linalg.norm(block, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ZeroRow(int(zero[0]) + start)
        out[start:start + _CHUNK_ROWS] = block / norms[:, None]
    return EmbeddingMatrix(out, normalized=True)


def write_scores(path, s: ScoreVector, fmt: str = "binary") -> None:
    """Write scores as SCR1 (``fmt="binary"``) or as ``index,score`` CSV."""
    if fmt == "binary":
        payload = SCR_MAGIC + struct.pack("<IB", s.count, int(s.detector)) + s.scores.astype("<f8").tobytes()
    elif fmt == "csv":
        payload = ("index,score\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(s.scores.tolist()))).encode()
    else:
        raise ValueError(f"unknown score format {fmt!r}")
    try:
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_scores(path) -> ScoreVector:
    with open(path, "rb") as f:
        head = f.read(4)
        if head == SCR_MAGIC:
            count, tag = struct.unpack("<IB", _read_exact(f, 5, "SCR1 header"))
            payload = _read_exact(f, 8 * count, "SCR1 payload")
            if f.read(1):
                raise TruncatedFile(f"{path}: trailing bytes after declared payload")
            return ScoreVector(np.frombuffer(payload, dtype="<f8").astype(np.float64), Detector(tag))
    if head != b"inde":
        raise BadMagic(f"{path}: neither SCR1 nor index,score CSV")
    with open(path) as f:
        header = f.readline().strip()
        if header != "index,score":
            raise BadMagic(f"{path}: unexpected CSV header {header!r}")
        rows = [line.split(",") for line in f if line.strip()]
    idx = [int(r[0]) for r in rows]
    if idx != list(range(len(idx))):
        raise ValueError(f"{path}: CSV rows are not in index order")
    return ScoreVector(np.array([float(r[1]) for r in rows], dtype=np.float64))
