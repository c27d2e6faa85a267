"""End-to-end estimation and small-scale dense checkers.

The estimator soft-thresholds the covariance, embeds the surviving pattern
in a chordal graph and solves the max-determinant completion dual by
Newton-CG. Under the equivalence conditions checked by
:func:`theorem1_check` the result is the restricted graphical lasso
solution, which :func:`kkt_check` verifies directly.

Penalty convention used throughout: ``sum_{i != j} lambda_ij |X_ij|``, i.e.
each off-diagonal pair is charged once per triangle. This is the convention
under which soft-thresholding by ``lambda`` and the optimality conditions
``(X^{-1})_ij = C_ij + lambda_ij sign(X_ij)`` line up.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .barrier import complete_factor, dense_maxdet_completion
from .chordal import EdgeBasis, fill_reducing_order, symbolic_embed
from .exceptions import ConvergenceError, InputError, NotCompletable
from .newton_cg import SolverConfig, newton_solve
from .sparse_sym import SparseSymMatrix, SparsityPattern
from .threshold import LambdaSpec, threshold_covariance

__all__ = [
    "EstimateResult",
    "rgl_estimate",
    "kkt_check",
    "KKTReport",
    "gl_objective",
    "reference_gl_solve",
    "ic_complement",
    "sign_consistency_check",
    "SignConsistency",
    "theorem1_check",
    "Theorem1Diagnostic",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 400
ZERO_TOL = 1e-12


@dataclass
class EstimateResult:
    """Everything produced by :func:`rgl_estimate` beyond ``X_hat``."""

    C_H: SparseSymMatrix
    embedding: object
    y: np.ndarray
    threshold: object
    seconds_threshold: float


def rgl_estimate(source, lam, H=None, cfg=None, block_size=4000, ordering="auto",
                 threads=None, return_details=False):
    """Threshold, embed and solve; returns ``(X_hat, report)``.

    ``X_hat`` lives on the pattern of the thresholded matrix. The report is a
    :class:`~sparsecov.newton_cg.SolverReport` with embedding time filled in.
    With ``return_details`` a third element :class:`EstimateResult` is added.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    C_H, trep = threshold_covariance(source, lam, H, block_size=block_size,
                                     threads=threads, return_report=True)
    t1 = time.perf_counter()
    E = symbolic_embed(C_H.pattern, fill_reducing_order(C_H.pattern, ordering))
    t_embed = time.perf_counter() - t1
    try:
        X, y, rep = newton_solve(C_H, E, EdgeBasis(E), cfg)
    except NotCompletable as exc:
        raise NotCompletable(
            exc.clique,
            "thresholded matrix has no positive definite completion; the "
            "thresholding equivalence conditions are likely violated",
        ) from None
    except ConvergenceError as exc:
        X, y, rep = exc.result
        rep.seconds_embed = t_embed
        raise
    rep.seconds_embed = t_embed
    if return_details:
        return X, rep, EstimateResult(C_H, E, y, trep, t1 - t0)
    return X, rep


# ---------------------------------------------------------------- dense helpers


def _dense(M, n=None):
    if isinstance(M, SparseSymMatrix):
        return M.to_dense()
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError("matrix is not square")
    if n is not None and M.shape[0] != n:
        raise InputError(f"dimension mismatch: {M.shape[0]} vs {n}")
    return M


def _mask(P, n):
    if P is None:
        return np.ones((n, n), dtype=bool)
    if isinstance(P, SparsityPattern):
        if P.n != n:
            raise InputError(f"pattern has n = {P.n}, matrix has n = {n}")
        return P.mask()
    M = np.asarray(P, dtype=bool)
    return M | M.T | np.eye(n, dtype=bool)


def _lam_dense(lam, n):
    L = LambdaSpec(lam).dense(n)
    np.fill_diagonal(L, 0.0)
    return L


def _check_size(n):
    if n > DENSE_LIMIT:
        raise InputError(f"dense checker limited to n <= {DENSE_LIMIT}")


def gl_objective(X, C, lam, H=None):
    """``-log det X + tr(C X) + sum_{i != j} lambda_ij |X_ij|`` (inf if not PD)."""
    X = _dense(X)
    n = X.shape[0]
    C = _dense(C, n)
    try:
        logdet = 2.0 * np.sum(np.log(np.diag(np.linalg.cholesky(X))))
    except np.linalg.LinAlgError:
        return np.inf
    if H is not None and np.any(X[~_mask(H, n)] != 0):
        return np.inf
    return float(-logdet + np.sum(C * X) + np.sum(_lam_dense(lam, n) * np.abs(X)))


@dataclass
class KKTReport:
    ok: bool
    max_violation: float
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def kkt_check(X, C, lam, H=None, tol=1e-6):
    """Optimality conditions of the restricted graphical lasso.

    With ``P = X^{-1}``: ``P_ii = C_ii``; ``P_ij = C_ij + lambda_ij sign(X_ij)``
    where ``X_ij != 0``; ``|P_ij - C_ij| <= lambda_ij`` where ``X_ij = 0``
    (both for pairs in ``H``); ``X_ij = 0`` exactly outside ``H``. Entries
    with ``|X_ij| < 1e-12`` count as zero. Violations are listed as
    ``(clause, i, j, amount)`` with ``i <= j``.
    """
    X = _dense(X)
    n = X.shape[0]
    _check_size(n)
    C = _dense(C, n)
    Hm = _mask(H, n)
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        raise InputError("X is not positive definite") from None
    Linv = np.linalg.inv(L)
    P = Linv.T @ Linv
    lamd = _lam_dense(lam, n)
    iu, ju = np.triu_indices(n)
    diag = iu == ju
    x = X[iu, ju]
    d = P[iu, ju] - C[iu, ju]
    lam_v = lamd[iu, ju]
    inH = Hm[iu, ju]
    nz = np.abs(x) >= ZERO_TOL
    amount = np.zeros(iu.size)
    clause = np.empty(iu.size, dtype=object)
    m = diag
    amount[m] = np.abs(d[m])
    clause[m] = "diagonal"
    m = ~diag & inH & nz
    amount[m] = np.abs(d[m] - lam_v[m] * np.sign(x[m]))
    clause[m] = "nonzero"
    m = ~diag & inH & ~nz
    amount[m] = np.maximum(np.abs(d[m]) - lam_v[m], 0.0)
    clause[m] = "zero"
    m = ~diag & ~inH
    amount[m] = np.abs(x[m])
    clause[m] = "outside-prior"
    bad = np.flatnonzero((amount > tol) | (m & (x != 0)))
    bad = bad[np.argsort(-amount[bad], kind="stable")]
    viol = [(clause[k], int(iu[k]), int(ju[k]), float(amount[k])) for k in bad]
    return KKTReport(not viol, float(amount.max()) if amount.size else 0.0, viol)


def reference_gl_solve(C, lam, H=None, tol=1e-9, max_iter=200_000, X0=None):
    """Dense restricted graphical lasso by proximal gradient.

    Barzilai-Borwein step sizes with backtracking (for positive definiteness
    and sufficient decrease); stops when the Frobenius norm of the gradient
    mapping is at most ``tol``. A first-order method, deliberately unrelated
    to the Newton-CG route it is used to check.
    """
    C = _dense(C)
    n = C.shape[0]
    _check_size(n)
    Hm = _mask(H, n)
    lamd = _lam_dense(lam, n)
    if np.any(np.diag(C) <= 0):
        raise InputError("covariance diagonal must be positive")
    X = np.diag(1.0 / np.diag(C)) if X0 is None else _dense(X0).copy()

    def smooth(X):
        L = np.linalg.cholesky(X)
        return -2.0 * np.sum(np.log(np.diag(L))) + np.sum(C * X), L

    def prox(Z, t):
        out = np.sign(Z) * np.maximum(np.abs(Z) - t * lamd, 0.0)
        out[~Hm] = 0.0
        return out

    h, L = smooth(X)
    Li = np.linalg.inv(L)
    grad = np.where(Hm, C - Li.T @ Li, 0.0)
    t = 1.0 / np.max(np.diag(C)) ** 2
    for it in range(max_iter):
        while True:
            Xn = prox(X - t * grad, t)
            Xn = (Xn + Xn.T) / 2
            try:
                hn, Ln = smooth(Xn)
            except np.linalg.LinAlgError:
                t /= 2
                continue
            D = Xn - X
            if hn <= h + np.sum(grad * D) + np.sum(D * D) / (2 * t) + 1e-15 * abs(h):
                break
            t /= 2
            if t < 1e-20:
                raise ConvergenceError("reference solver step collapsed")
        gmap = np.linalg.norm(D) / t
        Li = np.linalg.inv(Ln)
        gn = np.where(Hm, C - Li.T @ Li, 0.0)
        X, h = Xn, hn
        if gmap <= tol:
            return X
        dg = gn - grad
        grad = gn
        sy = np.sum(D * dg)
        t = np.sum(D * D) / sy if sy > 0 else 2 * t
    raise ConvergenceError(f"reference solver stopped at gradient-map norm {gmap:.3g}")


# ---------------------------------------------------------------- consistency


def ic_complement(M, G=None):
    """Inverse-consistent complement ``N = W - M``.

    ``W`` is the max-determinant completion of ``M`` restricted to ``G``
    (default: the nonzeros of ``M``). ``N`` is exactly zero on ``G``. For a
    chordal ``G`` the completion comes from the clique recursion, otherwise
    from dense coordinate ascent.
    """
    M = _dense(M)
    n = M.shape[0]
    _check_size(n)
    mask = _mask(G, n) if G is not None else (M != 0) | np.eye(n, dtype=bool)
    r, c = np.nonzero(np.tril(mask))
    P = SparsityPattern.from_lower(n, r, c)
    E = symbolic_embed(P, fill_reducing_order(P))
    if E.m == 0:
        X = complete_factor(SparseSymMatrix.from_dense(M, P), E).X().to_dense()
        W = np.linalg.inv(X)
        W = (W + W.T) / 2
    else:
        W = dense_maxdet_completion(M, mask)
    N = W - M
    N[mask] = 0.0
    return N


@dataclass
class SignConsistency:
    ok: bool
    violations: list = field(default_factory=list)
    indeterminate: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def sign_consistency_check(M, G=None, N=None):
    """Do ``M`` and ``(M + N)^{-1}`` have opposite signs on ``G``?

    Only off-diagonal pairs with ``M_ij != 0`` are tested. Inverse entries
    smaller than 1e-12 in magnitude are listed as indeterminate and make the
    result false.
    """
    M = _dense(M)
    n = M.shape[0]
    mask = _mask(G, n) if G is not None else (M != 0) | np.eye(n, dtype=bool)
    if N is None:
        N = ic_complement(M, mask)
    Z = np.linalg.inv(M + N)
    iu, ju = np.nonzero(np.triu(mask & (M != 0), 1))
    z, m = Z[iu, ju], M[iu, ju]
    small = np.abs(z) < ZERO_TOL
    wrong = ~small & (np.sign(z) != -np.sign(m))
    viol = [(int(a), int(b)) for a, b in zip(iu[wrong], ju[wrong])]
    ind = [(int(a), int(b)) for a, b in zip(iu[small], ju[small])]
    return SignConsistency(not viol and not ind, viol, ind)


@dataclass
class Theorem1Diagnostic:
    """Sufficient conditions for thresholding to give the RGL pattern.

    ``complement_norm`` is ``||N(C_tilde)||_max`` for this instance only: a
    lower bound on the worst-case quantity in the third condition, so
    ``surrogate_ok`` is a necessary-direction check, not a certificate.
    """

    C_H: SparseSymMatrix
    D: np.ndarray
    C_tilde: np.ndarray
    pd_ok: bool
    sign_ok: bool
    complement_norm: float
    rhs_beta: float
    surrogate_ok: bool
    notes: list = field(default_factory=list)

    @property
    def all_ok(self):
        return self.pd_ok and self.sign_ok and self.surrogate_ok

    def lines(self):
        return [
            f"n={self.C_H.n}",
            f"edges={self.C_H.pattern.n_offdiag}",
            f"pd_ok={str(self.pd_ok).lower()}",
            f"sign_ok={str(self.sign_ok).lower()}",
            f"complement_norm={self.complement_norm:.6e}",
            f"rhs_beta={self.rhs_beta:.6e}",
            f"surrogate_ok={str(self.surrogate_ok).lower()}",
            "surrogate_note=instance complement norm is a lower bound on beta; "
            "the comparison is necessary, not sufficient",
        ] + [f"note={s}" for s in self.notes]


def theorem1_check(C, lam, H=None):
    """Check the thresholding-equivalence conditions on a dense covariance.

    1. ``C_tilde = D^{-1/2} C_H D^{-1/2}`` is positive definite;
    2. ``C_tilde`` is sign-consistent;
    3. surrogate: ``||N(C_tilde)||_max <= min (lambda_kl - |C_kl|) / sqrt(C_kk C_ll)``
       over off-diagonal ``(k, l)`` in ``H`` outside the thresholded pattern.
    """
    C = _dense(C)
    n = C.shape[0]
    _check_size(n)
    lam = LambdaSpec(lam)
    C_H = threshold_covariance(C, lam, H)
    D = C_H.diagonal()
    if np.any(D <= 0):
        raise InputError("thresholded matrix has a non-positive diagonal")
    s = 1.0 / np.sqrt(D)
    Ct = C_H.to_dense() * s[:, None] * s[None, :]
    np.fill_diagonal(Ct, 1.0)
    notes = []
    pd_ok = bool(np.linalg.eigvalsh(Ct)[0] > 0)
    if not pd_ok:
        notes.append("normalized thresholded matrix is not positive definite")
    G = C_H.pattern
    Gm = G.mask()
    try:
        N = ic_complement(Ct, Gm)
        comp = float(np.abs(N).max()) if n > 1 else 0.0
        sc = sign_consistency_check(Ct, Gm, N)
        sign_ok = sc.ok
        if sc.indeterminate:
            notes.append(f"{len(sc.indeterminate)} inverse entries indeterminate in sign")
        if sc.violations:
            notes.append(f"{len(sc.violations)} sign violations, first {sc.violations[0]}")
    except NotCompletable:
        comp, sign_ok = np.inf, False
        notes.append("normalized thresholded matrix has no positive definite completion")
    Hm = _mask(H, n)
    k, l = np.nonzero(np.triu(Hm & ~Gm, 1))
    if k.size:
        lamd = _lam_dense(lam, n)
        d = np.diag(C)
        rhs = float(np.min((lamd[k, l] - np.abs(C[k, l])) / np.sqrt(d[k] * d[l])))
    else:
        rhs = np.inf
    return Theorem1Diagnostic(C_H, D, Ct, pd_ok, sign_ok, comp, rhs, comp <= rhs, notes)
