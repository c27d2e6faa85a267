import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsecov.exceptions import InputError
from sparsecov.sparse_sym import (
    SampleMatrix,
    SparseSymMatrix,
    SparsityPattern,
    build_pattern,
    is_subpattern,
    project,
    sample_cov_block,
)

CYCLE4 = [(0, 1), (1, 2), (2, 3), (0, 3)]


def test_build_pattern_counts():
    assert build_pattern(3, []).nnz == 3
    assert build_pattern(3, [(0, 1), (1, 0)]).nnz == 4
    P = build_pattern(4, CYCLE4)
    assert P.nnz == 8
    assert P.n_offdiag == 4


def test_pattern_storage_is_lower_with_diagonal_first():
    P = build_pattern(4, [(3, 0), (2, 1), (0, 2)])
    for j in range(4):
        col = P.rowidx[P.colptr[j]:P.colptr[j + 1]]
        assert col[0] == j
        assert np.all(np.diff(col) > 0)
    assert np.all(P.rowidx >= P.cols)


def test_pattern_rejects_bad_input():
    with pytest.raises(InputError):
        build_pattern(3, [(0, 3)])
    with pytest.raises(InputError):
        build_pattern(3, [(-1, 0)])
    with pytest.raises(InputError):
        SparsityPattern(2, [0, 1, 1], [0])  # column 1 lacks its diagonal
    with pytest.raises(InputError):
        SparsityPattern(2, [0, 2, 3], [1, 0, 1])  # unsorted


def test_locate_and_contains():
    P = build_pattern(4, CYCLE4)
    assert (0, 3) in P and (3, 0) in P
    assert (1, 3) not in P
    assert (5, 0) not in P
    pos = P.locate([0, 1], [1, 3])
    assert pos[0] >= 0 and pos[1] == -1


def test_project_examples():
    d = project(np.array([[1.0, 2.0], [2.0, 3.0]]), SparsityPattern.diagonal(2))
    assert np.array_equal(d.to_dense(), np.diag([1.0, 3.0]))
    P = build_pattern(4, CYCLE4)
    X = SparseSymMatrix(P, np.arange(1.0, 9.0))
    assert np.array_equal(project(X, P).values, X.values)


def test_project_matches_mask_oracle():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 6))
    A = A + A.T
    P = build_pattern(6, [(0, 4), (2, 3), (5, 1), (5, 4)])
    got = project(A, P).to_dense()
    assert np.array_equal(got, np.where(P.mask(), A, 0.0))


def test_project_idempotent_and_symmetric():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((7, 7))
    A = A + A.T
    P = build_pattern(7, [(0, 6), (1, 2), (3, 5)])
    Q = build_pattern(7, [(0, 6), (4, 5)])
    once = project(A, P)
    assert np.array_equal(project(once, P).values, once.values)
    B = project(once, Q)
    assert np.array_equal(B.get([0, 6], [6, 0]), [A[0, 6], A[0, 6]])
    assert B.get(4, 5) == 0.0


def test_project_shape_mismatch():
    with pytest.raises(InputError):
        project(np.eye(3), SparsityPattern.diagonal(4))


def test_is_subpattern():
    D = SparsityPattern.diagonal(4)
    C = build_pattern(4, CYCLE4)
    Cc = build_pattern(4, CYCLE4 + [(1, 3)])
    assert is_subpattern(D, C)
    assert is_subpattern(C, Cc)
    assert not is_subpattern(Cc, C)
    with pytest.raises(InputError):
        is_subpattern(D, SparsityPattern.diagonal(5))


def test_sparse_matrix_roundtrips():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((5, 5))
    A = A + A.T
    M = SparseSymMatrix.from_dense(A)
    assert np.array_equal(M.to_dense(), A)
    assert np.array_equal(M.to_scipy().toarray(), A)
    assert np.array_equal(SparseSymMatrix.from_scipy(M.to_scipy()).to_dense(), A)
    assert np.isclose(M.inner(M), np.sum(A * A))


def test_sparse_matrix_rejects_nonfinite():
    with pytest.raises(InputError):
        SparseSymMatrix(SparsityPattern.diagonal(2), [1.0, np.nan])
    with pytest.raises(InputError):
        SparseSymMatrix(SparsityPattern.diagonal(2), [1.0])


def test_dropzeros_keeps_diagonal():
    P = build_pattern(3, [(0, 1), (1, 2)])
    M = SparseSymMatrix(P, [0.0, 5.0, 1.0, 0.0, 2.0])
    D = M.dropzeros()
    assert D.pattern.nnz == 4
    assert np.array_equal(D.to_dense(), M.to_dense())


def test_single_sample_rank_one():
    X = SampleMatrix(np.array([[2.0], [3.0]]), center=False)
    assert sample_cov_block(X, range(0, 1), range(0, 1))[0, 0] == 4.0


def test_samples_are_centered():
    X = SampleMatrix.from_samples(np.arange(12.0).reshape(4, 3))
    assert np.allclose(X.data.mean(axis=1), 0.0)
    assert X.n == 3 and X.N == 4


def test_sample_matrix_validation():
    with pytest.raises(InputError):
        SampleMatrix(np.ones(3))
    with pytest.raises(InputError):
        SampleMatrix(np.ones((3, 0)))
    with pytest.raises(InputError):
        SampleMatrix(np.array([[1.0, np.inf]]))
    X = SampleMatrix(np.ones((3, 2)))
    with pytest.raises(InputError):
        sample_cov_block(X, range(0, 4), range(0, 1))
    with pytest.raises(InputError):
        sample_cov_block(X, range(2, 2), range(0, 1))


def test_full_block_matches_dense_product():
    rng = np.random.default_rng(3)
    X = SampleMatrix(rng.standard_normal((9, 13)))
    C = sample_cov_block(X, range(9), range(9))
    assert np.allclose(C, X.data @ X.data.T / 13, rtol=1e-13, atol=1e-15)


@given(st.integers(0, 10_000), st.integers(1, 9))
def test_blocks_tile_bit_exactly(seed, b):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 20))
    X = SampleMatrix(rng.standard_normal((n, int(rng.integers(1, 30)))))
    full = sample_cov_block(X, range(n), range(n))
    tiled = np.empty_like(full)
    for r0 in range(0, n, b):
        for c0 in range(0, n, b):
            r1, c1 = min(n, r0 + b), min(n, c0 + b)
            tiled[r0:r1, c0:c1] = sample_cov_block(X, range(r0, r1), range(c0, c1))
    assert np.array_equal(tiled, full)
    assert np.array_equal(full, full.T)
