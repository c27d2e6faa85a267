"""Weighted soft-thresholding of the sample covariance.

The covariance is never formed in full: it is visited in square blocks of
``block_size`` rows and columns (lower triangle only), each block is
thresholded and only the surviving entries are kept. Every entry is
accumulated over the samples in one fixed order, so the result does not
depend on the block size, on the visiting order or on the number of worker
threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import InputError
from .sparse_sym import SampleMatrix, SparseSymMatrix, SparsityPattern

__all__ = [
    "LambdaSpec",
    "ThresholdReport",
    "soft_threshold_entry",
    "soft_threshold",
    "threshold_covariance",
    "default_threads",
]

THREADS_ENV = "SPARSECOV_THREADS"


def default_threads():
    """Worker count from ``SPARSECOV_THREADS`` (default 1)."""
    v = os.environ.get(THREADS_ENV, "1")
    try:
        t = int(v)
    except ValueError:
        raise InputError(f"{THREADS_ENV} must be an integer, got {v!r}") from None
    return max(1, t)


class LambdaSpec:
    """Penalty weights: a scalar, or a table of per-pair values.

    A table is a :class:`SparseSymMatrix` whose off-diagonal entries give
    ``lambda_ij``; pairs not listed use ``default``. Diagonal weights are
    never used.
    """

    def __init__(self, value=None, default=0.0):
        if isinstance(value, LambdaSpec):
            value, default = (value.table if value.table is not None else value.scalar), value.default
        self.table = None
        self.scalar = None
        self.default = float(default)
        if isinstance(value, SparseSymMatrix):
            off = value.values[value.pattern.offdiag_mask]
            if np.any(off < 0) or self.default < 0:
                raise InputError("penalty weights must be nonnegative")
            self.table = value
        else:
            v = float(0.0 if value is None else value)
            if not np.isfinite(v) or v < 0:
                raise InputError(f"lambda must be a nonnegative number, got {value!r}")
            self.scalar = v

    @property
    def is_scalar(self):
        return self.table is None

    @property
    def n(self):
        return None if self.table is None else self.table.n

    def values(self, i, j):
        """Weights for index pairs (arrays); diagonal pairs return 0."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if self.table is None:
            out = np.full(np.broadcast(i, j).shape, self.scalar)
        else:
            pos = self.table.pattern.locate(i, j)
            out = np.where(pos >= 0, self.table.values[np.maximum(pos, 0)], self.default)
        return np.where(i == j, 0.0, out)

    def block(self, r0, r1, c0, c1):
        """Dense weights for rows ``[r0, r1)`` and columns ``[c0, c1)``."""
        if self.table is None:
            return self.scalar
        out = np.full((r1 - r0, c1 - c0), self.default)
        P = self.table.pattern
        v = self.table.values
        for a, b, w in ((P.rowidx, P.cols, v), (P.cols, P.rowidx, v)):
            sel = (a >= r0) & (a < r1) & (b >= c0) & (b < c1)
            out[a[sel] - r0, b[sel] - c0] = w[sel]
        return out

    def dense(self, n):
        return self.block(0, n, 0, n) * np.ones((n, n))

    def __repr__(self):
        if self.table is None:
            return f"LambdaSpec({self.scalar})"
        return f"LambdaSpec(table n={self.table.n}, default={self.default})"


@dataclass
class ThresholdReport:
    """Assumption checks gathered while thresholding.

    ``ties`` counts off-diagonal pairs (inside ``H``) with ``|C_ij| = lambda_ij``
    and ``zero_weights`` those with ``lambda_ij = 0``; both are excluded by
    the equivalence theory. ``kept`` is the number of surviving edges.
    """

    n: int
    kept: int
    ties: int
    zero_weights: int
    block_size: int

    @property
    def assumption_ok(self):
        return self.ties == 0 and self.zero_weights == 0


def soft_threshold_entry(c, lam, diagonal=False):
    """Shrink ``c`` toward zero by ``lam`` (diagonal entries pass through)."""
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    if diagonal:
        return c
    if c > lam:
        return c - lam
    if c < -lam:
        return c + lam
    return 0.0


def soft_threshold(c, lam):
    """Vectorised off-diagonal soft-threshold; ``|c| == lam`` maps to 0."""
    c = np.asarray(c, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0):
        raise InputError("lambda must be nonnegative")
    return np.where(c > lam, c - lam, np.where(c < -lam, c + lam, 0.0))


def _as_source(source):
    if isinstance(source, SampleMatrix):
        return source, None
    if isinstance(source, SparseSymMatrix):
        source = source.to_dense()
    C = np.asarray(source, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InputError("covariance must be a square matrix")
    if not np.all(np.isfinite(C)):
        raise InputError("covariance contains non-finite values")
    if not np.array_equal(C, C.T):
        raise InputError("covariance is not symmetric")
    return None, C


def _diag(X, C):
    if C is not None:
        return np.diag(C).copy()
    idx = np.arange(X.n)
    return _kernels.cov_entries(X.data, idx, idx)


def _block_job(X, C, lam, r0, r1, c0, c1, Hmask=None):
    if C is not None:
        B = C[r0:r1, c0:c1]
    else:
        B = _kernels.cov_block(X.data, r0, r1, c0, c1)
    rr, cc = np.nonzero(B)  # zeros can neither survive nor tie unless lam is 0
    if r0 == c0:
        low = rr > cc
        rr, cc = rr[low], cc[low]
    vals = B[rr, cc]
    L = lam.block(r0, r1, c0, c1)
    w = L if np.isscalar(L) else L[rr, cc]
    out = soft_threshold(vals, w)
    keep = out != 0
    ties = int(np.count_nonzero(np.abs(vals) == w))
    return rr[keep] + r0, cc[keep] + c0, out[keep], ties


def threshold_covariance(source, lam, H=None, block_size=4000, threads=None, return_report=False):
    """``C_H = P_H(C_lambda)`` with exact zeros dropped from the pattern.

    ``source`` is a :class:`SampleMatrix` (covariance blocks formed on the
    fly) or a dense symmetric covariance. ``lam`` is a number or a
    :class:`LambdaSpec`. With a prior pattern ``H`` only entries of ``H`` are
    computed. Diagonal entries of ``C`` must be strictly positive.
    """
    X, C = _as_source(source)
    n = X.n if X is not None else C.shape[0]
    lam = LambdaSpec(lam)
    if lam.n is not None and lam.n != n:
        raise InputError(f"lambda table has n = {lam.n}, data has n = {n}")
    block_size = int(block_size)
    if block_size < 1:
        raise InputError("block size must be at least 1")
    if H is not None and H.n != n:
        raise InputError(f"prior pattern has n = {H.n}, data has n = {n}")
    threads = default_threads() if threads is None else max(1, int(threads))

    d = _diag(X, C)
    if np.any(d <= 0):
        i = int(np.argmin(d))
        raise InputError(f"covariance diagonal must be positive (entry {i} is {d[i]:g})")

    if H is None:
        starts = list(range(0, n, block_size))
        jobs = [(r0, min(r0 + block_size, n), c0, min(c0 + block_size, n))
                for r0 in starts for c0 in starts if c0 <= r0]
        run = lambda b: _block_job(X, C, lam, *b)  # noqa: E731
        zero_w = (n * (n - 1)) // 2 if lam.is_scalar and lam.scalar == 0 else None
    else:
        off = np.flatnonzero(H.offdiag_mask)
        chunk = block_size * block_size
        jobs = [off[k : k + chunk] for k in range(0, off.size, chunk)]
        run = lambda sel: _entries_job(X, C, lam, H, sel)  # noqa: E731
        zero_w = None
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(b) for b in jobs]

    rows = np.concatenate([p[0] for p in parts] + [np.arange(n)])
    cols = np.concatenate([p[1] for p in parts] + [np.arange(n)])
    vals = np.concatenate([p[2] for p in parts] + [d])
    ties = sum(p[3] for p in parts)
    P = SparsityPattern.from_lower(n, rows, cols)
    v = np.empty(P.nnz)
    v[P.locate(rows, cols)] = vals
    out = SparseSymMatrix(P, v)
    if not return_report:
        return out
    if zero_w is None:
        zero_w = _count_zero_weights(lam, n, H)
    return out, ThresholdReport(n, P.n_offdiag, ties, zero_w, block_size)


def _entries_job(X, C, lam, H, sel):
    r = H.rowidx[sel]
    c = H.cols[sel]
    vals = C[r, c] if C is not None else _kernels.cov_entries(X.data, r, c)
    w = lam.values(r, c)
    out = soft_threshold(vals, w)
    keep = out != 0
    ties = int(np.count_nonzero(np.abs(vals) == w))
    return r[keep], c[keep], out[keep], ties


def _count_zero_weights(lam, n, H):
    if H is not None:
        off = H.offdiag_mask
        return int(np.count_nonzero(lam.values(H.rowidx[off], H.cols[off]) == 0))
    if lam.is_scalar:
        return (n * (n - 1)) // 2 if lam.scalar == 0 else 0
    P = lam.table.pattern
    off = P.offdiag_mask
    listed = int(np.count_nonzero(lam.table.values[off] == 0))
    unlisted = (n * (n - 1)) // 2 - int(np.count_nonzero(off))
    return listed + (unlisted if lam.default == 0 else 0)
