"""Symmetric sparse storage, pattern projection, and sample covariance blocks.

Patterns keep only the lower triangle in compressed-column form: column ``j``
lists its row indices in increasing order, and the first one is always ``j``
itself. Entry ``k`` of a pattern is therefore the pair ``(col[k], row[k])``
with ``col <= row``; queries for ``(i, j)`` and ``(j, i)`` hit the same slot.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .exceptions import InputError

__all__ = [
    "SparsityPattern",
    "SparseSymMatrix",
    "SampleMatrix",
    "build_pattern",
    "project",
    "is_subpattern",
    "sample_cov_block",
]


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class SparsityPattern:
    """Symmetric index set over ``n`` nodes, diagonal always included.

    Use :func:`build_pattern` or :meth:`from_lower` to construct one; the raw
    constructor expects already-canonical arrays.
    """

    __slots__ = ("n", "colptr", "rowidx", "_cols", "_keys")

    def __init__(self, n, colptr, rowidx, check=True):
        self.n = int(n)
        self.colptr = _frozen(colptr, np.int64)
        self.rowidx = _frozen(rowidx, np.int64)
        self._cols = None
        self._keys = None
        if check:
            self._validate()

    def _validate(self):
        n, cp, ri = self.n, self.colptr, self.rowidx
        if cp.shape != (n + 1,) or cp[0] != 0 or cp[-1] != ri.size:
            raise InputError("pattern column pointer is inconsistent")
        if np.any(np.diff(cp) < 1):
            raise InputError("pattern is missing diagonal entries")
        if ri.size and (ri.min() < 0 or ri.max() >= n):
            raise InputError("pattern row index out of range")
        if np.any(ri[cp[:-1]] != np.arange(n)):
            raise InputError("pattern is missing diagonal entries")
        keys = self.keys
        if np.any(np.diff(keys) <= 0) or np.any(ri < self.cols):
            raise InputError("pattern entries are not sorted, unique and lower-triangular")

    @classmethod
    def from_lower(cls, n, rows, cols):
        """Canonical pattern from arbitrary index pairs (either triangle)."""
        n = int(n)
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise InputError("row and column index arrays differ in length")
        if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n):
            raise InputError(f"index out of range for n = {n}")
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        diag = np.arange(n, dtype=np.int64)
        keys = np.unique(np.concatenate([diag * n + diag, lo * n + hi]))
        c = keys // n
        r = keys - c * n
        colptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(c, minlength=n), out=colptr[1:])
        return cls(n, colptr, r, check=False)

    @classmethod
    def diagonal(cls, n):
        return cls(n, np.arange(n + 1), np.arange(n), check=False)

    @classmethod
    def full(cls, n):
        r, c = np.tril_indices(n)
        return cls.from_lower(n, r, c)

    @classmethod
    def from_scipy(cls, A):
        """Pattern of the nonzeros of a (square) scipy sparse or dense matrix."""
        A = sp.coo_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise InputError("matrix is not square")
        mask = A.data != 0
        return cls.from_lower(A.shape[0], A.row[mask], A.col[mask])

    @property
    def nnz(self):
        """Number of stored (lower-triangle) entries including the diagonal."""
        return int(self.rowidx.size)

    @property
    def n_offdiag(self):
        """Number of off-diagonal edges (unordered pairs)."""
        return self.nnz - self.n

    @property
    def cols(self):
        if self._cols is None:
            self._cols = _frozen(np.repeat(np.arange(self.n), np.diff(self.colptr)), np.int64)
        return self._cols

    @property
    def keys(self):
        if self._keys is None:
            self._keys = _frozen(self.cols * self.n + self.rowidx, np.int64)
        return self._keys

    @property
    def entries(self):
        """``(nnz, 2)`` array of pairs ``(i, j)`` with ``i <= j``, sorted."""
        return np.column_stack([self.cols, self.rowidx])

    @property
    def offdiag_mask(self):
        return self.rowidx != self.cols

    def locate(self, i, j):
        """Storage positions of pairs ``(i, j)``; ``-1`` where absent."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        k = np.minimum(i, j) * self.n + np.maximum(i, j)
        pos = np.searchsorted(self.keys, k)
        pos = np.minimum(pos, self.nnz - 1)
        found = self.keys[pos] == k
        return np.where(found, pos, -1)

    def __contains__(self, ij):
        i, j = ij
        if not (0 <= i < self.n and 0 <= j < self.n):
            return False
        return int(self.locate(i, j)) >= 0

    def __eq__(self, other):
        if not isinstance(other, SparsityPattern):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.keys, other.keys)

    def __hash__(self):
        return hash((self.n, self.keys.tobytes()))

    def __repr__(self):
        return f"SparsityPattern(n={self.n}, nnz={self.nnz})"

    def mask(self):
        """Dense symmetric boolean mask (small ``n`` only)."""
        M = np.zeros((self.n, self.n), dtype=bool)
        M[self.rowidx, self.cols] = True
        M[self.cols, self.rowidx] = True
        return M

    def adjacency(self):
        """Symmetric CSR adjacency matrix without the diagonal."""
        off = self.offdiag_mask
        r, c = self.rowidx[off], self.cols[off]
        data = np.ones(2 * r.size, dtype=np.int8)
        A = sp.csr_matrix(
            (data, (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(self.n, self.n)
        )
        A.sort_indices()
        return A

    def union(self, other):
        _check_same_n(self, other)
        keys = np.union1d(self.keys, other.keys)
        c = keys // self.n
        return SparsityPattern.from_lower(self.n, keys - c * self.n, c)


def _check_same_n(P, Q):
    if P.n != Q.n:
        raise InputError(f"pattern sizes differ: {P.n} vs {Q.n}")


def build_pattern(n, edges=()):
    """Canonical pattern on ``n`` nodes from a list of index pairs.

    Duplicates and both orientations of an edge collapse to one entry and all
    diagonal pairs are added.

    >>> build_pattern(3, [(0, 1), (1, 0)]).nnz
    4
    """
    edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    return SparsityPattern.from_lower(n, edges[:, 0], edges[:, 1])


class SparseSymMatrix:
    """Values attached to a :class:`SparsityPattern` (lower triangle)."""

    __slots__ = ("pattern", "values")

    def __init__(self, pattern, values):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (pattern.nnz,):
            raise InputError(
                f"value array has length {values.size}, pattern has {pattern.nnz} entries"
            )
        if not np.all(np.isfinite(values)):
            raise InputError("matrix contains non-finite values")
        self.pattern = pattern
        self.values = values

    @property
    def n(self):
        return self.pattern.n

    @classmethod
    def from_dense(cls, M, pattern=None):
        """Sparse copy of a dense symmetric matrix.

        Without ``pattern`` the nonzeros of ``M`` (plus the diagonal) are kept.
        Only the lower triangle of ``M`` is read.
        """
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise InputError("matrix is not square")
        if pattern is None:
            r, c = np.nonzero(np.tril(M))
            pattern = SparsityPattern.from_lower(M.shape[0], r, c)
        return cls(pattern, M[pattern.rowidx, pattern.cols])

    @classmethod
    def from_scipy(cls, A, pattern=None):
        A = sp.csc_matrix(A)
        if pattern is None:
            pattern = SparsityPattern.from_scipy(A)
        return project(A, pattern)

    def to_dense(self):
        P = self.pattern
        M = np.zeros((P.n, P.n))
        M[P.rowidx, P.cols] = self.values
        M[P.cols, P.rowidx] = self.values
        return M

    def to_scipy(self):
        """Full symmetric matrix as ``scipy.sparse.csc_matrix``."""
        P = self.pattern
        off = P.offdiag_mask
        r = np.concatenate([P.rowidx, P.cols[off]])
        c = np.concatenate([P.cols, P.rowidx[off]])
        v = np.concatenate([self.values, self.values[off]])
        return sp.csc_matrix((v, (r, c)), shape=(P.n, P.n))

    def diagonal(self):
        return self.values[self.pattern.colptr[:-1]].copy()

    def get(self, i, j):
        pos = self.pattern.locate(i, j)
        return np.where(pos >= 0, self.values[np.maximum(pos, 0)], 0.0)

    def inner(self, other):
        """Frobenius inner product ``tr(A B)`` of two matrices on one pattern."""
        if other.pattern is not self.pattern and other.pattern != self.pattern:
            raise InputError("inner product needs matching patterns")
        w = np.where(self.pattern.offdiag_mask, 2.0, 1.0)
        return float(np.dot(w * self.values, other.values))

    def max_abs_offdiag(self):
        v = self.values[self.pattern.offdiag_mask]
        return float(np.abs(v).max()) if v.size else 0.0

    def dropzeros(self):
        """Copy with exact off-diagonal zeros removed from the pattern."""
        P = self.pattern
        keep = (self.values != 0) | ~P.offdiag_mask
        Q = SparsityPattern.from_lower(P.n, P.rowidx[keep], P.cols[keep])
        return SparseSymMatrix(Q, self.values[keep])

    def __repr__(self):
        return f"SparseSymMatrix(n={self.n}, nnz={self.pattern.nnz})"


def project(M, P):
    """Restrict ``M`` to pattern ``P``.

    ``M`` may be a dense symmetric array, a scipy sparse matrix or a
    :class:`SparseSymMatrix`. Entries of ``P`` absent from ``M`` get zero.
    """
    if isinstance(M, SparseSymMatrix):
        _check_same_n(M.pattern, P)
        if M.pattern is P or M.pattern == P:
            return SparseSymMatrix(P, M.values.copy())
        pos = M.pattern.locate(P.cols, P.rowidx)
        vals = np.where(pos >= 0, M.values[np.maximum(pos, 0)], 0.0)
        return SparseSymMatrix(P, vals)
    if sp.issparse(M):
        if M.shape != (P.n, P.n):
            raise InputError(f"matrix shape {M.shape} does not match pattern size {P.n}")
        M = sp.csr_matrix(M)
        vals = np.asarray(M[P.rowidx, P.cols]).ravel()
        return SparseSymMatrix(P, vals)
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (P.n, P.n):
        raise InputError(f"matrix shape {M.shape} does not match pattern size {P.n}")
    return SparseSymMatrix(P, M[P.rowidx, P.cols])


def is_subpattern(P, Q):
    """True iff every entry of ``P`` is also in ``Q``."""
    _check_same_n(P, Q)
    if P.nnz > Q.nnz:
        return False
    return bool(np.all(Q.locate(P.cols, P.rowidx) >= 0))


class SampleMatrix:
    """Centered matrix of samples, variables by samples.

    ``data`` is ``(n, N)``; row ``i`` holds variable ``i`` over all samples,
    so ``C = data @ data.T / N``.
    """

    __slots__ = ("data",)

    def __init__(self, data, center=True):
        data = np.array(data, dtype=np.float64, order="C", copy=True)
        if data.ndim != 2:
            raise InputError("sample data must be two-dimensional")
        if data.shape[1] < 1:
            raise InputError("sample data has no samples")
        if not np.all(np.isfinite(data)):
            raise InputError("sample data contains non-finite values")
        if center:
            data -= data.mean(axis=1, keepdims=True)
        data.setflags(write=False)
        self.data = data

    @classmethod
    def from_samples(cls, X, center=True):
        """Build from a ``(N, n)`` array, one sample per row."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise InputError("samples must be a two-dimensional array")
        return cls(X.T, center=center)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def N(self):
        return self.data.shape[1]

    def covariance(self):
        """Dense ``C = X X^T / N`` (small ``n`` only)."""
        return sample_cov_block(self, range(self.n), range(self.n))

    def __repr__(self):
        return f"SampleMatrix(n={self.n}, N={self.N})"


def _as_range(r, n):
    if isinstance(r, slice):
        r = range(*r.indices(n))
    if isinstance(r, range):
        if r.step != 1:
            raise InputError("index ranges must be contiguous")
        start, stop = r.start, r.stop
    else:
        start, stop = r
    if not (0 <= start < stop <= n):
        raise InputError(f"empty or out-of-bounds range [{start}, {stop}) for n = {n}")
    return start, stop


def sample_cov_block(X, rows, cols):
    """Dense block ``X[rows] X[cols]^T / N`` of the sample covariance.

    Each entry is accumulated over samples in a fixed order, so a given
    ``C[i, j]`` is bit-identical no matter which block it is computed in.
    """
    r0, r1 = _as_range(rows, X.n)
    c0, c1 = _as_range(cols, X.n)
    return _kernels.cov_block(X.data, r0, r1, c0, c1)
