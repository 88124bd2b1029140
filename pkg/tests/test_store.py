import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from poison_scan import (
    Detector,
    EmbeddingMatrix,
    ScoreVector,
    l2_normalize,
    load_embeddings,
    load_labels,
    read_scores,
    save_embeddings,
    save_labels,
    write_scores,
)
from poison_scan.errors import (
    BadMagic,
    InvalidLabelValue,
    IoError,
    NonFiniteValue,
    TruncatedFile,
    ZeroDim,
    ZeroRow,
)


def _raw_emb(path, count, dim, values):
    with open(path, "wb") as f:
        f.write(b"EMB1" + struct.pack("<II", count, dim))
        f.write(np.asarray(values, dtype="<f4").tobytes())


def test_load_identity_rows(tmp_path):
    p = tmp_path / "m.emb"
    _raw_emb(p, 2, 3, [1, 0, 0, 0, 1, 0])
    m = load_embeddings(p)
    assert (m.count, m.dim) == (2, 3)
    np.testing.assert_array_equal(m.data, [[1, 0, 0], [0, 1, 0]])
    assert not m.data.flags.writeable


def test_header_only_is_truncated(tmp_path):
    p = tmp_path / "m.emb"
    _raw_emb(p, 4, 3, [])
    with pytest.raises(TruncatedFile):
        load_embeddings(p)


def test_trailing_bytes_rejected(tmp_path):
    p = tmp_path / "m.emb"
    _raw_emb(p, 1, 2, [1, 2, 3])
    with pytest.raises(TruncatedFile):
        load_embeddings(p)


def test_nan_location_reported(tmp_path):
    values = np.zeros((8, 4), dtype=np.float32)
    values[5, 2] = np.nan
    p = tmp_path / "m.emb"
    _raw_emb(p, 8, 4, values.ravel())
    with pytest.raises(NonFiniteValue) as info:
        load_embeddings(p)
    assert (info.value.row, info.value.col) == (5, 2)


def test_bad_magic_and_zero_dim(tmp_path):
    p = tmp_path / "m.emb"
    p.write_bytes(b"EMB2" + struct.pack("<II", 1, 1) + b"\0" * 4)
    with pytest.raises(BadMagic):
        load_embeddings(p)
    _raw_emb(p, 3, 0, [])
    with pytest.raises(ZeroDim):
        load_embeddings(p)


def test_labels(tmp_path):
    p = tmp_path / "l.lbl"
    p.write_bytes(b"LBL1" + struct.pack("<I", 3) + bytes([0, 1, 0]))
    assert load_labels(p).flags.tolist() == [0, 1, 0]
    p.write_bytes(b"LBL1" + struct.pack("<I", 3) + bytes([0, 7, 0]))
    with pytest.raises(InvalidLabelValue) as info:
        load_labels(p)
    assert info.value.index == 1
    p.write_bytes(b"LBL1" + struct.pack("<I", 0))
    assert load_labels(p).count == 0
    p.write_bytes(b"LBL1" + struct.pack("<I", 5) + bytes([0, 1]))
    with pytest.raises(TruncatedFile):
        load_labels(p)


def test_label_round_trip(tmp_path):
    p = tmp_path / "l.lbl"
    save_labels(p, np.array([1, 0, 0, 1]))
    assert load_labels(p, expected_count=4).flags.tolist() == [1, 0, 0, 1]


def test_l2_normalize_examples():
    m = l2_normalize(EmbeddingMatrix(np.array([[3.0, 4.0], [1.0, 0.0]])))
    np.testing.assert_allclose(m.data, [[0.6, 0.8], [1.0, 0.0]], atol=1e-7)
    assert m.normalized
    with pytest.raises(ZeroRow) as info:
        l2_normalize(EmbeddingMatrix(np.array([[1.0, 1.0], [0.0, 0.0]])))
    assert info.value.index == 1


finite_rows = arrays(np.float32, st.tuples(st.integers(1, 12), st.integers(1, 6)),
                     elements=st.floats(-1e3, 1e3, width=32))


@given(finite_rows)
def test_normalize_idempotent(values):
    norms = np.linalg.norm(values.astype(np.float64), axis=1)
    values = values[norms > 1e-3]
    if len(values) == 0:
        return
    once = l2_normalize(EmbeddingMatrix(values))
    twice = l2_normalize(once)
    np.testing.assert_allclose(twice.data, once.data, atol=1e-6)
    np.testing.assert_allclose(np.linalg.norm(once.data.astype(np.float64), axis=1), 1.0, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 20), st.integers(1, 9)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=32)))
def test_embedding_round_trip_bit_exact(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("rt") / "m.emb"
    save_embeddings(p, EmbeddingMatrix(values))
    back = load_embeddings(p)
    assert back.data.tobytes() == values.tobytes()


def test_scores_round_trip_binary_and_csv(tmp_path):
    s = ScoreVector(np.array([0.1, 2.5, -1.0]), Detector.SLOF)
    write_scores(tmp_path / "s.scr", s)
    back = read_scores(tmp_path / "s.scr")
    assert back.scores.tobytes() == s.scores.tobytes()
    assert back.detector is Detector.SLOF
    write_scores(tmp_path / "s.csv", s, fmt="csv")
    assert read_scores(tmp_path / "s.csv").scores.tobytes() == s.scores.tobytes()


def test_csv_export_format(tmp_path):
    write_scores(tmp_path / "s.csv", ScoreVector([1.5]), fmt="csv")
    assert (tmp_path / "s.csv").read_text() == "index,score\n0,1.5\n"


def test_unwritable_path(tmp_path):
    with pytest.raises(IoError):
        write_scores(tmp_path / "missing-dir" / "s.scr", ScoreVector([1.0]))
