"""Synthetic instance generators and the scaling harness.

Random streams: every generator uses numpy's Philox 4x64 counter-based
generator with a two-word key ``(seed, stream)``. Matrix column ``j`` draws
from stream ``j``; sample ``k`` draws from stream ``2**63 + k``. Output is
therefore a pure function of the parameters and seed, independent of
processing order or thread count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .barrier import factor_primal
from .chordal import EdgeBasis, fill_reducing_order, symbolic_embed
from .exceptions import InputError, SparseCovError
from .newton_cg import SolverConfig, newton_solve
from .sparse_sym import SampleMatrix, SparseSymMatrix, SparsityPattern, sample_cov_block

__all__ = [
    "stream",
    "gen_banded",
    "gen_graph_case",
    "ScalingReport",
    "scaling_run",
    "fit_slope",
    "lambda_for_edges",
    "favorable_lambda",
    "graph_run",
    "GraphReport",
    "BANDED_SIZES",
]

BANDED_SIZES = (1000, 2000, 5000, 10000, 20000, 50000)
SAMPLE_STREAM = 1 << 63
_MASK64 = (1 << 64) - 1
CORRUPTION = 0.3
DENSE_SAMPLING_LIMIT = 2000


def stream(seed, index):
    """Generator for stream ``index`` under ``seed``."""
    key = np.array([int(seed) & _MASK64, int(index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def gen_banded(n, bandwidth=101, seed=0, offdiag_scale=1.0):
    """Corrupted banded matrix.

    Diagonal 5; each in-band off-diagonal is drawn uniformly from
    ``[-2, 0)`` (times ``offdiag_scale``) and then set to zero with
    probability 0.3. With ``offdiag_scale = 1`` and bandwidth 101 the
    dense clique blocks of this matrix are indefinite, so it has no positive
    definite completion; the scaling harness uses 0.05.
    """
    n, bandwidth = int(n), int(bandwidth)
    if bandwidth < 1 or bandwidth % 2 == 0 or bandwidth >= n:
        raise InputError("bandwidth must be odd and smaller than n")
    if not 0 < offdiag_scale <= 1:
        raise InputError("offdiag_scale must lie in (0, 1]")
    h = (bandwidth - 1) // 2
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, 5.0)]
    for j in range(n - 1):
        k = min(h, n - 1 - j)
        rng = stream(seed, j)
        v = -2.0 * offdiag_scale * (1.0 - rng.random(k))  # in [-2s, 0)
        keep = rng.random(k) >= CORRUPTION
        r = np.arange(j + 1, j + 1 + k)
        rows.append(r[keep])
        cols.append(np.full(int(keep.sum()), j))
        vals.append(v[keep])
    rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
    P = SparsityPattern.from_lower(n, rows, cols)
    out = np.empty(P.nnz)
    out[P.locate(rows, cols)] = vals
    return SparseSymMatrix(P, out)


def gen_graph_case(G, N=5000, seed=0, dense_limit=DENSE_SAMPLING_LIMIT):
    """Sparse precision matrix on ``G`` and ``N`` Gaussian samples.

    Off-diagonals of the precision are uniform on ``[-1, 1]`` then zeroed
    with probability 0.3; each diagonal is ``1 + sum_j |offdiag|``, so every
    row has diagonal surplus exactly 1. Samples are ``x = L^{-T} z`` with
    ``L L^T`` the precision under a fill-reducing permutation, using a dense
    factor up to ``dense_limit`` and a chordal sparse factor beyond; the two
    routes agree to rounding. Returns ``(SampleMatrix, precision)``; the
    precision keeps pattern ``G`` with exact zeros at corrupted entries.
    """
    n, N = G.n, int(N)
    if N < 1:
        raise InputError("need at least one sample")
    off = G.offdiag_mask
    vals = np.zeros(G.nnz)
    cp = G.colptr
    for j in range(n):
        p0, p1 = cp[j] + 1, cp[j + 1]
        k = p1 - p0
        if k == 0:
            continue
        rng = stream(seed, j)
        v = rng.uniform(-1.0, 1.0, k)
        v[rng.random(k) < CORRUPTION] = 0.0
        vals[p0:p1] = v
    a = np.abs(vals * off)
    rowsum = np.bincount(G.rowidx, a, minlength=n) + np.bincount(G.cols, a, minlength=n)
    vals[cp[:-1]] = 1.0 + rowsum
    K = SparseSymMatrix(G, vals)

    Z = np.empty((n, N))
    for k in range(N):
        Z[:, k] = stream(seed, SAMPLE_STREAM + k).standard_normal(n)
    # both routes factor the same permuted matrix, so they agree to rounding
    Ks = K.dropzeros()
    E = symbolic_embed(Ks.pattern, fill_reducing_order(Ks.pattern))
    perm = E.ordering.perm
    Zp = np.ascontiguousarray(Z[perm])
    if n <= dense_limit:
        L = np.linalg.cholesky(Ks.to_dense()[np.ix_(perm, perm)])
        Xp = scipy.linalg.solve_triangular(L.T, Zp, lower=False)
    else:
        F = factor_primal(Ks, E)
        Xp = _kernels.ltsolve(E.cp, E.ri, F.l, Zp)
    Xs = np.empty_like(Xp)
    Xs[perm] = Xp
    return SampleMatrix(Xs), K


def lambda_for_edges(X, k, block_size=2000):
    """Threshold leaving about ``k`` off-diagonal covariance entries.

    Returns the midpoint between the ``k``-th and ``(k+1)``-th largest
    off-diagonal magnitudes, so no entry ties with it.
    """
    n = X.n
    k = int(k)
    if k < 1 or k >= n * (n - 1) // 2:
        raise InputError("edge target out of range")
    best = np.empty(0)
    for r0 in range(0, n, block_size):
        r1 = min(n, r0 + block_size)
        for c0 in range(0, r1, block_size):
            c1 = min(n, c0 + block_size)
            B = np.abs(sample_cov_block(X, range(r0, r1), range(c0, c1)))
            if r0 == c0:
                B = B[np.tril_indices(r1 - r0, -1)]
            best = np.concatenate([best, B.ravel()])
            if best.size > k + 1:
                best = np.partition(best, best.size - (k + 1))[-(k + 1):]
    top = np.sort(best)[::-1]
    return float(0.5 * (top[k - 1] + top[k]))


def favorable_lambda(X, k_start, min_k=1):
    """Smallest top-``k`` threshold whose surviving graph passes the
    computable equivalence conditions.

    ``k`` starts at ``k_start`` and shrinks by a fifth until the thresholded matrix
    is positive definite and sign-consistent with its inverse-consistent
    complement (dense check, small ``n`` only). Returns ``(lam, k)``.
    """
    from .pipeline import theorem1_check

    C = X.covariance()
    k = max(int(k_start), min_k)
    while True:
        lam = lambda_for_edges(X, k)
        t = theorem1_check(C, lam)
        if (t.pd_ok and t.sign_ok) or k <= min_k:
            return lam, k
        k = max(min(k - 1, int(0.8 * k)), min_k)


def fit_slope(sizes, seconds):
    """Least-squares slope of ``log seconds`` against ``log n``."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(seconds, dtype=float))
    if x.size < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ScalingReport:
    sizes: list = field(default_factory=list)
    bandwidth: int = 0
    seed: int = 0
    offdiag_scale: float = 1.0
    m: list = field(default_factory=list)
    max_clique: list = field(default_factory=list)
    seconds_embed: list = field(default_factory=list)
    seconds_solve: list = field(default_factory=list)
    newton_steps: list = field(default_factory=list)
    cg_medians: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    feas: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    slope: float = float("nan")

    @property
    def seconds_total(self):
        return [a + b for a, b in zip(self.seconds_embed, self.seconds_solve)]

    @property
    def cg_ratio(self):
        c = [x for x in self.cg_medians if x > 0]
        return max(c) / min(c) if c else float("nan")

    def to_text(self):
        head = f"{'n':>8} {'m':>9} {'clq':>4} {'embed_s':>8} {'solve_s':>8} {'newton':>6} {'cg_med':>6} {'gap':>9} {'feas':>9}"
        lines = [
            f"banded scaling: bandwidth={self.bandwidth} seed={self.seed} offdiag_scale={self.offdiag_scale}",
            head,
        ]
        for k, n in enumerate(self.sizes):
            lines.append(
                f"{n:>8} {self.m[k]:>9} {self.max_clique[k]:>4} {self.seconds_embed[k]:>8.2f} "
                f"{self.seconds_solve[k]:>8.2f} {self.newton_steps[k]:>6} {self.cg_medians[k]:>6.1f} "
                f"{self.gaps[k]:>9.2e} {self.feas[k]:>9.2e}"
            )
        for n, e in self.errors.items():
            lines.append(f"n={n} failed: {e}")
        lines += [
            "",
            f"slope={self.slope:.4f}",
            f"cg_ratio={self.cg_ratio:.4f}",
            f"max_newton={max(self.newton_steps, default=0)}",
            f"max_gap={max(self.gaps, default=float('nan')):.3e}",
            f"max_feas={max(self.feas, default=float('nan')):.3e}",
            f"seconds_total={sum(self.seconds_total):.2f}",
        ]
        return "\n".join(lines) + "\n"


def scaling_run(sizes=BANDED_SIZES, bandwidth=101, seed=7, offdiag_scale=0.05, cfg=None,
                ordering="auto", progress=None):
    """Embed and solve the banded family at each size; fit the time slope.

    Timing covers ordering plus symbolic embedding, and the Newton-CG solve,
    separately; instance generation is excluded. Sizes whose solve fails are
    recorded in ``errors`` and left out of the fit.
    """
    sizes = [int(s) for s in sizes]
    if sizes != sorted(set(sizes)):
        raise InputError("sizes must be strictly increasing")
    cfg = cfg or SolverConfig()
    rep = ScalingReport(bandwidth=bandwidth, seed=seed, offdiag_scale=offdiag_scale)
    for n in sizes:
        C = gen_banded(n, bandwidth, seed, offdiag_scale)
        t0 = time.perf_counter()
        E = symbolic_embed(C.pattern, fill_reducing_order(C.pattern, ordering))
        t1 = time.perf_counter()
        try:
            _, _, r = newton_solve(C, E, EdgeBasis(E), cfg)
        except SparseCovError as exc:
            rep.errors[n] = str(exc)
            continue
        rep.sizes.append(n)
        rep.m.append(E.m)
        rep.max_clique.append(E.kmax)
        rep.seconds_embed.append(t1 - t0)
        rep.seconds_solve.append(r.seconds_solve)
        rep.newton_steps.append(r.newton_steps)
        rep.cg_medians.append(r.cg_median)
        rep.gaps.append(r.final_gap)
        rep.feas.append(r.final_feas)
        if progress:
            progress(n, r)
    rep.slope = fit_slope(rep.sizes, rep.seconds_total)
    return rep


@dataclass
class GraphReport:
    n: int
    N: int
    seed: int
    lam: float
    true_edges: int
    kept_edges: int
    true_positive: int
    solve: object
    seconds_threshold: float

    def to_text(self):
        r = self.solve
        lines = [
            f"graph case: n={self.n} N={self.N} seed={self.seed}",
            f"lambda={self.lam:.6g}",
            f"true_edges={self.true_edges}",
            f"kept_edges={self.kept_edges}",
            f"true_positive={self.true_positive}",
            f"seconds_threshold={self.seconds_threshold:.3f}",
        ]
        return "\n".join(lines) + "\n" + r.to_text()


def graph_run(G, N=5000, seed=7, lam=None, k=None, cfg=None, threads=None):
    """Generate a case on ``G`` and run the thresholding estimator on it.

    ``lam`` defaults to the threshold keeping ``k`` entries, and ``k``
    defaults to the number of edges of ``G``.
    """
    from .pipeline import rgl_estimate

    X, K = gen_graph_case(G, N, seed)
    Ktrue = K.dropzeros()
    true_edges = Ktrue.pattern.n_offdiag
    if lam is None:
        lam = lambda_for_edges(X, k or max(G.n_offdiag, 1))
    Xh, rep, det = rgl_estimate(X, lam, cfg=cfg, threads=threads, return_details=True)
    P = det.C_H.pattern
    off = P.offdiag_mask
    tp = int(np.count_nonzero(Ktrue.pattern.locate(P.rowidx[off], P.cols[off]) >= 0))
    return GraphReport(G.n, X.N, seed, float(lam), true_edges, int(off.sum()), tp, rep,
                       det.seconds_threshold)
