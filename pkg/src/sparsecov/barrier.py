"""Log-det barrier functions on a chordal pattern and their dense references.

For ``X`` in the cone of positive definite matrices with pattern ``Gt``:

* ``f(X) = -log det X``, ``grad f(X) = -P(X^{-1})``,
  ``hess f(X)[Y] = P(X^{-1} Y X^{-1})``;
* ``f*(S) = n + log det X`` where ``X`` is the unique member of the cone with
  ``P(X^{-1}) = S``; ``grad f*(S) = -X`` and ``hess f*(S) = hess f(X)^{-1}``.

``P`` projects onto ``Gt``. Every operation costs time proportional to the
sum of squared (or cubed, for completion) column counts of the Cholesky
factor, which is ``O(n)`` for bounded clique size.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .chordal import ChordalEmbedding, embed
from .exceptions import ConvergenceError, InputError, NotCompletable, NotPositiveDefinite
from .sparse_sym import SparseSymMatrix, SparsityPattern, project

__all__ = [
    "ChordalFactor",
    "factor_primal",
    "complete_factor",
    "projected_inverse",
    "hess_f_mvp",
    "hess_fstar_mvp",
    "f",
    "f_star",
    "grad_f",
    "grad_fstar",
    "dense_maxdet_completion",
    "dense_hess_f_matrix",
    "dense_fstar",
]


class ChordalFactor:
    """Cholesky factor ``X = L L^T`` on a chordal embedding.

    ``L`` is stored in the embedding's permuted column order (``l``). When the
    factor comes from :func:`complete_factor` it also keeps ``S = P(X^{-1})``
    and the clique-block factors needed by :func:`hess_fstar_mvp`; otherwise
    those are computed on first use.
    """

    def __init__(self, embedding, l, w=None, R=None):
        self.embedding = embedding
        self.l = l
        self._w = w
        self._R = R
        self.logdet = 2.0 * float(np.sum(np.log(l[embedding.cp[:-1]])))

    @property
    def n(self):
        return self.embedding.n

    @property
    def w(self):
        """``P(X^{-1})`` in permuted order."""
        if self._w is None:
            E = self.embedding
            self._w = _kernels.projected_inverse(E.cp, E.ri, self.l, E.kmax)
        return self._w

    @property
    def R(self):
        if self._R is None:
            E = self.embedding
            self._R, fail = _kernels.separator_factors(E.cp, E.ri, self.w, _roff(E), E.kmax)
            if fail >= 0:  # only reachable through severe rounding
                raise NotPositiveDefinite(int(E.ordering.perm[fail]))
        return self._R

    @property
    def diag(self):
        """Diagonal of ``L`` (permuted order)."""
        return self.l[self.embedding.cp[:-1]]

    def X_perm(self):
        E = self.embedding
        return _kernels.llt(E.cp, E.ri, self.l)

    def X(self):
        """``L L^T`` on the embedding pattern."""
        return SparseSymMatrix(self.embedding.Gt, self.embedding.from_perm(self.X_perm()))

    def hess_f_perm(self, y):
        E = self.embedding
        return _kernels.hess_f(E.cp, E.ri, self.l, self.w, y, E.kmax)

    def hess_fstar_perm(self, y):
        E = self.embedding
        return _kernels.hess_fstar(E.cp, E.ri, self.l, self.w, self.R, _roff(E), y, E.kmax)

    def solve(self, B):
        """``X^{-1} B`` for a dense ``(n, k)`` or ``(n,)`` array (original labels)."""
        E = self.embedding
        perm = E.ordering.perm
        B = np.asarray(B, dtype=np.float64)
        vec = B.ndim == 1
        Bp = B.reshape(self.n, -1)[perm]
        Z = np.empty_like(Bp)
        for c in range(Bp.shape[1]):
            Z[:, c] = _kernels.lsolve(E.cp, E.ri, self.l, Bp[:, c])
        Z = _kernels.ltsolve(E.cp, E.ri, self.l, Z)
        out = np.empty_like(Z)
        out[perm] = Z
        return out.ravel() if vec else out

    def __repr__(self):
        return f"ChordalFactor(n={self.n}, logdet={self.logdet:.6g})"


_ROFF_CACHE = "_roff"


def _roff(E):
    r = getattr(E, _ROFF_CACHE, None)
    if r is None:
        r = _kernels.packed_offsets(E.cp)
        object.__setattr__(E, _ROFF_CACHE, r)
    return r


def _resolve(M, E):
    """Embedding and permuted values for ``M`` on ``E.Gt``."""
    if E is None:
        E = embed(M.pattern)
        if E.m:
            raise InputError("pattern is not chordal; pass a chordal embedding")
    if not isinstance(E, ChordalEmbedding):
        raise InputError("expected a ChordalEmbedding")
    if M.pattern is not E.Gt and M.pattern != E.Gt:
        M = project(M, E.Gt)
    return E, E.to_perm(M.values)


def factor_primal(X, E=None):
    """Factor ``X`` (values on ``E.Gt``). Raises NotPositiveDefinite."""
    E, a = _resolve(X, E)
    fail = _kernels.cholesky(E.cp, E.ri, a)
    if fail >= 0:
        raise NotPositiveDefinite(int(E.ordering.perm[fail]))
    return ChordalFactor(E, a)


def _complete_perm(E, s):
    l, R, fail = _kernels.complete(E.cp, E.ri, s, _roff(E), E.kmax, True)
    if fail >= 0:
        raise NotCompletable(int(E.ordering.perm[fail]))
    return ChordalFactor(E, l, w=s, R=R)


def complete_factor(S, E=None):
    """Factor of the ``X`` with ``P(X^{-1}) = S``. Raises NotCompletable."""
    E, s = _resolve(S, E)
    return _complete_perm(E, s)


def _wrap(F, pvalues):
    E = F.embedding
    return SparseSymMatrix(E.Gt, E.from_perm(pvalues))


def projected_inverse(F):
    """``P(X^{-1})`` on the embedding pattern."""
    return _wrap(F, F.w)


def hess_f_mvp(F, Y):
    """``P(X^{-1} Y X^{-1})``."""
    _, y = _resolve(Y, F.embedding)
    return _wrap(F, F.hess_f_perm(y))


def hess_fstar_mvp(F, Y):
    """``Z`` with ``P(X^{-1} Z X^{-1}) = Y``, i.e. ``hess f*(S)[Y]``."""
    _, y = _resolve(Y, F.embedding)
    return _wrap(F, F.hess_fstar_perm(y))


def f(X, E=None):
    """``-log det X``, or ``inf`` outside the cone."""
    try:
        return -factor_primal(X, E).logdet
    except NotPositiveDefinite:
        return np.inf


def grad_f(F):
    return _wrap(F, -F.w)


def f_star(S, E=None):
    """``(n + log det X, factor)`` with ``X`` the completion dual to ``S``."""
    F = complete_factor(S, E)
    return F.n + F.logdet, F


def grad_fstar(F):
    """``-X`` on the embedding pattern."""
    return _wrap(F, -F.X_perm())


# ---------------------------------------------------------------- dense oracles


def _dense_input(S, mask):
    if isinstance(S, SparseSymMatrix):
        if mask is None:
            mask = S.pattern
        S = S.to_dense()
    S = np.array(S, dtype=np.float64)
    n = S.shape[0]
    if S.ndim != 2 or S.shape != (n, n):
        raise InputError("matrix is not square")
    if isinstance(mask, SparsityPattern):
        mask = mask.mask()
    elif mask is None:
        mask = S != 0
    mask = np.asarray(mask, dtype=bool) | np.eye(n, dtype=bool)
    mask = mask | mask.T
    return S, mask


def dense_maxdet_completion(S, mask=None, tol=1e-12, max_sweeps=100_000, limit=400):
    """Max-determinant positive definite completion of a partial matrix.

    ``S`` holds the specified entries where ``mask`` is true (a boolean array
    or a :class:`SparsityPattern`); other entries are ignored. Solved by
    cyclic coordinate ascent over the missing entries, each step zeroing the
    matching entry of the inverse, until the largest such inverse entry is at
    most ``tol``. If zero-filling ``S`` is not positive definite, the
    specified off-diagonals are scaled in from zero along a homotopy.

    Raises NotCompletable if the homotopy cannot advance and
    ConvergenceError after ``max_sweeps`` sweeps.
    """
    S, mask = _dense_input(S, mask)
    n = S.shape[0]
    if n > limit:
        raise InputError(f"dense oracle limited to n <= {limit}")
    if np.any(np.diag(S) <= 0):
        raise NotCompletable(int(np.argmin(np.diag(S))))
    mi, mj = np.nonzero(np.triu(~mask, 1))
    mi = mi.astype(np.int64)
    mj = mj.astype(np.int64)
    S0 = np.where(mask, S, 0.0)
    D = np.diag(np.diag(S0))
    off = S0 - D

    W = S0.copy()
    if _is_pd(W):
        tau = 1.0
    else:
        # homotopy on the specified off-diagonal scale
        W = D.copy()
        tau, step = 0.0, 0.5
        while tau < 1.0:
            t_new = min(1.0, tau + step)
            trial = W + (t_new - tau) * off
            if _is_pd(trial):
                _coordinate_ascent(trial, mi, mj, 1e-8, max_sweeps)
                W, tau = trial, t_new
                step = min(2 * step, 1.0)
            else:
                step /= 2
                if step < 1e-10:
                    raise NotCompletable(-1, "partial matrix has no positive definite completion")
    _coordinate_ascent(W, mi, mj, tol, max_sweeps)
    W[mask] = S[mask]  # specified entries are exact by construction
    return W


def _is_pd(M):
    try:
        np.linalg.cholesky(M)
        return True
    except np.linalg.LinAlgError:
        return False


def _coordinate_ascent(W, mi, mj, tol, max_sweeps):
    if mi.size == 0:
        return 0
    P = np.linalg.inv(W)
    sweeps, res = _kernels.maxdet_sweeps(W, P, mi, mj, tol, max_sweeps)
    if sweeps < 0:
        raise ConvergenceError(f"max-det oracle stopped at residual {res:.3g}")
    return sweeps


def dense_fstar(S, mask=None):
    """Dense ``(f*(S), X)`` computed through :func:`dense_maxdet_completion`."""
    W = dense_maxdet_completion(S, mask)
    X = np.linalg.inv(W)
    X = (X + X.T) / 2
    sign, logdet = np.linalg.slogdet(X)
    return W.shape[0] + logdet, X


def dense_hess_f_matrix(X, pattern):
    """Matrix of ``Y -> P(X^{-1} Y X^{-1})`` in pattern value coordinates.

    Coordinates follow ``SparseSymMatrix.values``: column ``p`` is the image of
    the symmetric unit matrix for entry ``p`` (both triangles set to one).
    """
    W = np.linalg.inv(np.asarray(X, dtype=np.float64))
    a, b = pattern.rowidx, pattern.cols
    i, j = pattern.rowidx, pattern.cols
    H = W[np.ix_(a, i)] * W[np.ix_(b, j)] + W[np.ix_(a, j)] * W[np.ix_(b, i)]
    diag = i == j
    H[:, diag] *= 0.5
    return H
