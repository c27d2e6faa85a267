"""Dual Newton-CG for the max-determinant matrix completion problem.

With ``Gt`` a chordal embedding of ``G`` and ``A`` the orthonormal basis of
the added edges, the dual problem is

    minimize  g(y) = f*(C - A(y)),   grad g = A^T(X),
    hess g(y) v = A^T(hess f*(S)[A(v)]),

where ``X = -grad f*(S)`` is the chordal completion dual to ``S = C - A(y)``.
At the minimiser ``X`` vanishes on the added edges, so it lies in the
pattern ``G`` and solves the primal problem. Each Newton direction is found
by conjugate gradients using only Hessian-vector products, followed by an
Armijo backtracking line search that also backs off from points outside the
domain of ``g``.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .barrier import _complete_perm
from .chordal import EdgeBasis
from .exceptions import ConvergenceError, InputError, NotCompletable, StallError
from .sparse_sym import SparseSymMatrix, project

__all__ = [
    "SolverConfig",
    "SolverReport",
    "DualState",
    "CGResult",
    "eval_state",
    "hess_g_mvp",
    "cg_solve",
    "line_search",
    "newton_solve",
    "estimate_condition",
    "phi_diag",
]


@dataclass
class SolverConfig:
    """Newton-CG parameters.

    ``cg_tol_max`` and ``cg_tol_min`` clamp the forcing sequence
    ``min(cg_tol_max, sqrt(delta_prev))``. With ``polish_final`` the step
    whose decrement meets ``newton_tol`` is re-solved to ``cg_tol_min``
    before it is taken, so the returned point is not limited by the loose
    forcing term of the previous step. ``diagnostics`` enables the
    condition-number bound quantities (extra eigenvalue work per step).
    """

    newton_tol: float = 1e-7
    max_newton: int = 50
    gamma: float = 0.01
    rho: float = 0.5
    cg_max_iter: int = 500
    cg_tol_max: float = 0.1
    cg_tol_min: float = 1e-12
    min_step: float = 1e-16
    polish_final: bool = True
    precondition: bool = False
    diagnostics: bool = False
    cond_iters: int = 30
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.gamma < 0.5:
            raise InputError(f"gamma must lie in (0, 0.5), got {self.gamma}")
        if not 0 < self.rho < 1:
            raise InputError(f"rho must lie in (0, 1), got {self.rho}")
        if self.newton_tol <= 0 or self.max_newton < 0 or self.cg_max_iter < 1:
            raise InputError("newton_tol, max_newton and cg_max_iter must be positive")
        if not 0 < self.cg_tol_min <= self.cg_tol_max < 1:
            raise InputError("need 0 < cg_tol_min <= cg_tol_max < 1")
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot open {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        if not isinstance(d, dict):
            raise InputError("solver config must be a JSON object")
        return cls.from_dict(d)


@dataclass
class SolverReport:
    n: int = 0
    m: int = 0
    nnz: int = 0
    max_clique: int = 0
    newton_steps: int = 0
    cg_iters: list = field(default_factory=list)
    decrements: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    hypothesis: list = field(default_factory=list)
    cg_breakdowns: int = 0
    final_gap: float = float("nan")
    final_feas: float = float("nan")
    converged: bool = False
    seconds_embed: float = 0.0
    seconds_solve: float = 0.0
    cond_estimates: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    phi_max: float = float("nan")
    lmax_X0: float = float("nan")
    lmin_Xhat: float = float("nan")

    @property
    def cg_total(self):
        return int(sum(self.cg_iters))

    @property
    def cg_median(self):
        return float(np.median(self.cg_iters)) if self.cg_iters else 0.0

    @property
    def cond_bound(self):
        """Right-hand side of the dimension-free condition number bound."""
        return 4.0 * (1.0 + self.phi_max**2 * self.lmax_X0 / self.lmin_Xhat) ** 2

    def key_values(self, timings=True):
        kv = {
            "n": self.n,
            "m": self.m,
            "newton_steps": self.newton_steps,
            "cg_total": self.cg_total,
            "gap": f"{self.final_gap:.6e}",
            "feas": f"{self.final_feas:.6e}",
            "converged": str(self.converged).lower(),
        }
        if timings:
            kv["seconds_embed"] = f"{self.seconds_embed:.3f}"
            kv["seconds_solve"] = f"{self.seconds_solve:.3f}"
        return kv

    def to_text(self):
        kv = self.key_values()
        w = max(len(k) for k in kv)
        lines = ["Newton-CG solve", "-" * (w + 16)]
        lines += [f"{k:<{w}}  {v}" for k, v in kv.items()]
        lines.append("")
        lines += [f"{k}={v}" for k, v in kv.items()]
        return "\n".join(lines) + "\n"

    def to_dict(self):
        d = asdict(self)
        d["cg_total"] = self.cg_total
        return d


class DualState:
    """Dual iterate ``y`` with ``S = C - A(y)``, its completion and ``g``.

    Arrays ``s`` and the factor live in the embedding's permuted order.
    """

    __slots__ = ("problem", "y", "s", "factor", "g", "grad", "_x")

    def __init__(self, problem, y, s, factor, grad, x):
        self.problem = problem
        self.y = y
        self.s = s
        self.factor = factor
        self.g = factor.n + factor.logdet
        self.grad = grad
        self._x = x

    @property
    def S(self):
        E = self.problem.E
        return SparseSymMatrix(E.Gt, E.from_perm(self.s))

    @property
    def X(self):
        """``-grad f*(S)`` on ``Gt``."""
        E = self.problem.E
        return SparseSymMatrix(E.Gt, E.from_perm(self._x))


class _Problem:
    def __init__(self, C, B):
        if not isinstance(B, EdgeBasis):
            raise InputError("expected an EdgeBasis")
        E = B.embedding
        if not isinstance(C, SparseSymMatrix):
            C = SparseSymMatrix.from_dense(C, E.Gt)
        elif C.pattern is not E.Gt and C.pattern != E.Gt:
            C = project(C, E.Gt)
        self.C = C
        self.E = E
        self.B = B
        self.c = E.to_perm(C.values)
        self.n = E.n
        self.m = B.m

    def state(self, y):
        s = self.c.copy()
        if self.m:
            s[self.B.ppositions] -= y * EdgeBasis.scale
        F = _complete_perm(self.E, s)
        x = F.X_perm()
        return DualState(self, y, s, F, self.B.AT_perm(x), x)

    def hess(self, state, v):
        return self.B.AT_perm(state.factor.hess_fstar_perm(self.B.A_perm(v)))


def eval_state(C, B, y=None):
    """Dual state at ``y`` (zero by default). Raises NotCompletable."""
    P = _Problem(C, B)
    y = np.zeros(P.m) if y is None else np.asarray(y, dtype=np.float64)
    if y.shape != (P.m,):
        raise InputError(f"y must have length {P.m}")
    return P.state(y.copy())


def hess_g_mvp(state, v):
    """``hess g(y) v``."""
    return state.problem.hess(state, np.asarray(v, dtype=np.float64))


@dataclass
class CGResult:
    x: np.ndarray
    iters: int
    residuals: list
    breakdown: bool = False
    converged: bool = False


def cg_solve(mvp, rhs, tol, max_iter, precond=None):
    """Conjugate gradients from ``x = 0`` until ``||r|| <= tol ||rhs||``.

    ``precond`` is an optional array of diagonal preconditioner values
    (applied as ``r / precond``). Non-positive curvature stops the iteration
    with ``breakdown=True``; ``x`` then holds the last trusted iterate.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    x = np.zeros_like(rhs)
    r = rhs.copy()
    bnorm = np.linalg.norm(rhs)
    res = [float(bnorm)]
    if bnorm == 0.0:
        return CGResult(x, 0, res, converged=True)
    z = r / precond if precond is not None else r
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, max_iter + 1):
        Ap = mvp(p)
        pAp = float(p @ Ap)
        if not pAp > 0.0:
            return CGResult(x, k - 1, res, breakdown=True)
        a = rz / pAp
        x += a * p
        r -= a * Ap
        rn = float(np.linalg.norm(r))
        res.append(rn)
        if rn <= tol * bnorm:
            return CGResult(x, k, res, converged=True)
        z = r / precond if precond is not None else r
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    return CGResult(x, max_iter, res)


def line_search(state, dy, cfg=None):
    """Armijo backtracking from ``alpha = 1``.

    Returns ``(alpha, new_state)``. Trial points outside the domain of
    ``g`` are treated like failed Armijo tests. Raises StallError when
    ``alpha`` drops below ``cfg.min_step``.
    """
    cfg = cfg or SolverConfig()
    slope = float(dy @ state.grad)
    if not slope < 0:
        raise InputError("line search needs a descent direction")
    alpha = 1.0
    P = state.problem
    while alpha >= cfg.min_step:
        try:
            trial = P.state(state.y + alpha * dy)
        except NotCompletable:
            trial = None
        if trial is not None and trial.g <= state.g + cfg.gamma * alpha * slope:
            return alpha, trial
        alpha *= cfg.rho
    raise StallError(f"no admissible step (slope {slope:.3e})")


def _finish(state, report, E, t0):
    x = state._x
    in_G = E.to_perm(E.in_G)
    report.final_feas = float(np.abs(x[~in_G]).max()) if report.m else 0.0
    Xt = state.X
    Xg = SparseSymMatrix(E.G, Xt.values[E.in_G])
    C = state.problem.C
    w = np.where(E.Gt.offdiag_mask, 2.0, 1.0)
    cx = float(np.dot(w * C.values, np.where(E.in_G, Xt.values, 0.0)))
    report.final_gap = abs(cx - report.n) / report.n
    report.seconds_solve = time.perf_counter() - t0
    return Xg


def newton_solve(C, E, B=None, cfg=None):
    """Solve the dual problem from ``y = 0``.

    ``C`` holds the thresholded covariance on ``E.G`` (or any pattern inside
    ``E.Gt``; it is placed on ``Gt`` with zeros on the added edges). Returns
    ``(X_hat, y_hat, report)`` with ``X_hat`` on the pattern ``G``.

    Raises NotCompletable when ``C`` itself has no positive definite
    completion, ConvergenceError after ``cfg.max_newton`` steps (the partial
    result is attached) and StallError when the line search fails.
    """
    cfg = cfg or SolverConfig()
    B = B or EdgeBasis(E)
    t0 = time.perf_counter()
    P = _Problem(C, B)
    report = SolverReport(n=E.n, m=B.m, nnz=E.Gt.nnz, max_clique=E.kmax)
    state = P.state(np.zeros(P.m))
    report.objective.append(state.g)
    g0 = state.g
    diag = cfg.diagnostics and P.m > 0
    if diag:
        report.lmax_X0 = _extreme_eig(state.factor, largest=True)

    delta_prev = np.inf
    converged = P.m == 0 or not np.any(state.grad)
    while not converged and report.newton_steps < cfg.max_newton:
        tol = float(np.clip(min(cfg.cg_tol_max, np.sqrt(delta_prev)), cfg.cg_tol_min, cfg.cg_tol_max))
        if diag:
            report.iterates.append(state.y.copy())
            report.hypothesis.append(float(state.grad @ state.y))
            report.cond_estimates.append(estimate_condition(state, cfg.cond_iters)[0])
        pre = _hess_diag(state) if cfg.precondition else None
        cg = cg_solve(lambda v: P.hess(state, v), -state.grad, tol, cfg.cg_max_iter, pre)
        dy = cg.x
        if cg.breakdown or not float(dy @ state.grad) < 0:
            report.cg_breakdowns += 1
            dy = -state.grad
        delta = abs(float(dy @ state.grad))
        iters = cg.iters
        if cfg.polish_final and delta < cfg.newton_tol and tol > cfg.cg_tol_min:
            cg = cg_solve(lambda v: P.hess(state, v), -state.grad, cfg.cg_tol_min, cfg.cg_max_iter, pre)
            iters += cg.iters
            if not cg.breakdown and float(cg.x @ state.grad) < 0:
                dy = cg.x
                delta = abs(float(dy @ state.grad))
        report.newton_steps += 1
        report.cg_iters.append(iters)
        report.decrements.append(delta)
        try:
            alpha, new = line_search(state, dy, cfg)
        except StallError:
            if delta < cfg.newton_tol:
                # already converged; the remaining decrease is below rounding
                report.step_sizes.append(0.0)
                converged = True
                break
            report.converged = False
            _finish(state, report, E, t0)
            raise
        if not new.g <= state.g:
            raise StallError("accepted step increased the objective")
        state = new
        report.step_sizes.append(alpha)
        report.objective.append(state.g)
        delta_prev = delta
        converged = delta < cfg.newton_tol

    report.converged = bool(converged)
    Xg = _finish(state, report, E, t0)
    if diag:
        report.phi_max = g0 - state.g
        report.lmin_Xhat = 1.0 / _extreme_eig(state.factor, largest=False, inverse=True)
        report.seconds_solve = time.perf_counter() - t0
    if not converged:
        raise ConvergenceError(
            f"no convergence in {cfg.max_newton} Newton steps", result=(Xg, state.y, report)
        )
    return Xg, state.y, report


def _hess_diag(state):
    P = state.problem
    d = np.empty(P.m)
    e = np.zeros(P.m)
    for k in range(P.m):
        e[k] = 1.0
        d[k] = P.hess(state, e)[k]
        e[k] = 0.0
    return d


def _extreme_eig(F, largest=True, inverse=False):
    """Largest eigenvalue of ``X`` (or of ``X^{-1}`` if ``inverse``)."""
    n = F.n
    if n <= 400:
        X = F.X().to_dense()
        ev = np.linalg.eigvalsh(np.linalg.inv(X) if inverse else X)
        return float(ev[-1])
    if inverse:
        op = spla.LinearOperator((n, n), matvec=F.solve, dtype=np.float64)
    else:
        op = F.X().to_scipy()
    return float(spla.eigsh(op, k=1, which="LA", return_eigenvectors=False, tol=1e-8)[0])


def estimate_condition(state, iters=30, seed=0):
    """Lanczos estimate ``(kappa, lmax, lmin, converged)`` of ``hess g``.

    Full reorthogonalisation; with ``iters >= m`` the Krylov space is
    complete and the values are exact up to rounding. When the Ritz values
    have not converged the interval is widened by the residual bounds.
    """
    P = state.problem
    m = P.m
    if m < 1:
        raise InputError("condition estimate needs at least one added edge")
    k = int(min(iters, m))
    rng = np.random.Generator(np.random.Philox(seed))
    Q = np.zeros((m, k + 1))
    q = rng.standard_normal(m)
    Q[:, 0] = q / np.linalg.norm(q)
    alpha = np.zeros(k)
    beta = np.zeros(k)
    steps = k
    for j in range(k):
        w = P.hess(state, Q[:, j])
        alpha[j] = Q[:, j] @ w
        w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] <= 1e-12 * max(abs(alpha[: j + 1]).max(), 1e-300):
            steps = j + 1
            break
        Q[:, j + 1] = w / beta[j]
    a, b = alpha[:steps], beta[: steps - 1]
    if steps == 1:
        theta, V = np.array([a[0]]), np.ones((1, 1))
    else:
        theta, V = scipy.linalg.eigh_tridiagonal(a, b)
    resid = np.abs(beta[steps - 1] * V[-1, :])
    lmax, lmin = float(theta[-1]), float(theta[0])
    rmax, rmin = float(resid[-1]), float(resid[0])
    converged = steps < k or steps == m or (rmax <= 1e-8 * lmax and rmin <= 1e-8 * lmax)
    if not converged:
        lmax += rmax
        lmin = max(lmin - rmin, np.finfo(float).tiny)
    return lmax / lmin, lmax, lmin, bool(converged)


def phi_diag(M):
    """``tr M - log det M - n`` for a dense positive definite ``M``."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError("matrix is not square")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise InputError("matrix is not positive definite") from None
    return float(np.trace(M) - 2.0 * np.sum(np.log(np.diag(L))) - M.shape[0])
