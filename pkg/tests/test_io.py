import numpy as np
import pytest

from sparsecov import io as sio
from sparsecov.exceptions import InputError
from sparsecov.sparse_sym import SampleMatrix, SparseSymMatrix, build_pattern
from sparsecov.threshold import LambdaSpec

HEADER = "%%MatrixMarket matrix coordinate real symmetric\n"


def _write(tmp_path, text, name="m.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_matrix_market_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    P = build_pattern(5, [(0, 4), (1, 2), (3, 1)])
    M = SparseSymMatrix(P, rng.standard_normal(P.nnz))
    path = str(tmp_path / "a.mtx")
    sio.write_matrix_market(path, M, comments=["hello"])
    back = sio.read_matrix_market(path)
    assert back.pattern == P
    assert np.array_equal(back.values, M.values)  # repr() keeps every bit


def test_pattern_roundtrip(tmp_path):
    P = build_pattern(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    path = str(tmp_path / "p.mtx")
    sio.write_matrix_market(path, P)
    assert "pattern" in open(path).readline()
    assert sio.read_pattern(path) == P


def test_upper_triangle_and_missing_diagonal(tmp_path):
    path = _write(tmp_path, HEADER + "3 3 2\n1 3 0.5\n2 2 4\n")
    M = sio.read_matrix_market(path)
    D = M.to_dense()
    assert D[0, 2] == D[2, 0] == 0.5
    assert D[1, 1] == 4.0 and D[0, 0] == 0.0


def test_general_storage_must_mirror(tmp_path):
    good = "%%MatrixMarket matrix coordinate real general\n2 2 4\n1 1 1\n2 1 3\n1 2 3\n2 2 1\n"
    assert sio.read_matrix_market(_write(tmp_path, good)).to_dense()[0, 1] == 3.0
    bad = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n2 1 3\n"
    with pytest.raises(InputError, match="line 4"):
        sio.read_matrix_market(_write(tmp_path, bad))


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("%%MatrixMarket matrix array real symmetric\n2 2\n", 1),
        ("%%MatrixMarket matrix coordinate complex symmetric\n", 1),
        ("%%MatrixMarket matrix coordinate real skew-symmetric\n", 1),
        (HEADER + "% c\n2 3 1\n", 3),
        (HEADER + "2 2 1\n1 x 1\n", 3),
        (HEADER + "2 2 1\n3 1 1\n", 3),
        (HEADER + "2 2 1\n1 1\n", 3),
        (HEADER + "2 2 2\n1 1 1\n1 1 2\n", 4),
        (HEADER + "2 2 2\n1 1 1\n", 3),
        (HEADER + "2 2 1\n1 1 1\n2 2 1\n", 4),
        (HEADER + "2 2 1\n1 1 nan\n", 3),
    ],
)
def test_malformed_matrix_market_reports_line(tmp_path, text, line):
    with pytest.raises(InputError) as err:
        sio.read_matrix_market(_write(tmp_path, text))
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_missing_file():
    with pytest.raises(InputError, match="cannot open"):
        sio.read_matrix_market("/nonexistent/file.mtx")


def test_lambda_table(tmp_path):
    path = _write(tmp_path, HEADER + "% default: 0.3\n3 3 1\n2 1 0.1\n")
    lam = sio.read_lambda_table(path)
    assert lam.values(0, 1) == 0.1
    assert lam.values(0, 2) == 0.3
    assert lam.values(1, 1) == 0.0
    out = str(tmp_path / "t.mtx")
    sio.write_lambda_table(out, lam)
    again = sio.read_lambda_table(out)
    assert np.array_equal(again.dense(3), lam.dense(3))
    with pytest.raises(InputError, match="line 2"):
        sio.read_lambda_table(_write(tmp_path, HEADER + "% default: abc\n2 2 0\n"))


@pytest.mark.parametrize("binary", [False, True])
def test_samples_roundtrip(tmp_path, binary):
    rng = np.random.default_rng(1)
    Z = rng.standard_normal((7, 4))
    path = str(tmp_path / "s.dat")
    sio.write_samples(path, Z, binary=binary)
    X = sio.read_samples(path, center=False)
    assert isinstance(X, SampleMatrix)
    assert np.array_equal(X.data, Z.T)


def test_binary_layout_is_column_major(tmp_path):
    path = str(tmp_path / "s.bin")
    sio.write_samples(path, np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]), binary=True)
    raw = open(path, "rb").read()
    assert raw[:4] == b"SMPL"
    assert np.frombuffer(raw[4:20], dtype="<i8").tolist() == [3, 2]
    assert np.frombuffer(raw[20:], dtype="<f8").tolist() == [1, 2, 3, 4, 5, 6]


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("3\n", 1),
        ("2 2\n1 2\n", 2),
        ("2 1\n1 2 3\n", 2),
        ("2 1\n1 a\n", 2),
        ("2 1\n1 2\n3 4\n", 3),
        ("2 1\n1 inf\n", 2),
    ],
)
def test_malformed_text_samples(tmp_path, text, line):
    with pytest.raises(InputError) as err:
        sio.read_samples(_write(tmp_path, text, "s.txt"))
    assert err.value.line == line


def test_truncated_binary_samples(tmp_path):
    p = tmp_path / "b.bin"
    p.write_bytes(b"SMPL" + np.array([2, 2], dtype="<i8").tobytes() + b"\0" * 8)
    with pytest.raises(InputError, match="data bytes"):
        sio.read_samples(str(p))


def test_lambda_spec_used_by_table_default():
    lam = LambdaSpec(0.25)
    assert lam.is_scalar and lam.values(0, 1) == 0.25
