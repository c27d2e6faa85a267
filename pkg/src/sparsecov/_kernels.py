"""Compiled inner loops.

All chordal kernels take a lower compressed-column structure ``(cp, ri)`` in
elimination order: column ``j`` holds rows ``J_j = {j} U I_j`` sorted, ``j``
first, and ``J_j`` is a clique of the pattern. Chordality guarantees that for
``b in I_j`` every row of ``J_j`` after ``b`` also appears in column ``b``, so
the clique blocks are reached by a forward walk down column ``b`` instead of
a dense gather.

Conventions: ``l`` is the Cholesky factor ``X = L L^T`` on the pattern; ``w``
or ``s`` are values of ``P(X^{-1})``; ``R`` stores, per column, the packed
lower Cholesky factor of ``W[I_j, I_j]`` at offset ``roff[j]``.
"""

import numpy as np
from numba import njit

# ---------------------------------------------------------------- covariance


@njit(cache=True, nogil=True)
def cov_block(data, r0, r1, c0, c1):
    N = data.shape[1]
    out = np.empty((r1 - r0, c1 - c0))
    for i in range(r0, r1):
        xi = data[i]
        j = c0
        while j + 4 <= c1:
            x0 = data[j]
            x1 = data[j + 1]
            x2 = data[j + 2]
            x3 = data[j + 3]
            s0 = 0.0
            s1 = 0.0
            s2 = 0.0
            s3 = 0.0
            for k in range(N):
                a = xi[k]
                s0 += a * x0[k]
                s1 += a * x1[k]
                s2 += a * x2[k]
                s3 += a * x3[k]
            out[i - r0, j - c0] = s0 / N
            out[i - r0, j + 1 - c0] = s1 / N
            out[i - r0, j + 2 - c0] = s2 / N
            out[i - r0, j + 3 - c0] = s3 / N
            j += 4
        while j < c1:
            xj = data[j]
            s = 0.0
            for k in range(N):
                s += xi[k] * xj[k]
            out[i - r0, j - c0] = s / N
            j += 1
    return out


@njit(cache=True, nogil=True)
def cov_entries(data, rows, cols):
    N = data.shape[1]
    out = np.empty(rows.size)
    for p in range(rows.size):
        xi = data[rows[p]]
        xj = data[cols[p]]
        s = 0.0
        for k in range(N):
            s += xi[k] * xj[k]
        out[p] = s / N
    return out


# ---------------------------------------------------------------- symbolic


@njit(cache=True)
def etree(indptr, indices, n):
    parent = -np.ones(n, dtype=np.int64)
    ancestor = -np.ones(n, dtype=np.int64)
    for k in range(n):
        for p in range(indptr[k], indptr[k + 1]):
            i = indices[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@njit(cache=True)
def symbolic_nnz(indptr, indices, n):
    """Entries of the Cholesky factor (lower, with diagonal), no structure."""
    parent = etree(indptr, indices, n)
    mark = -np.ones(n, dtype=np.int64)
    total = n
    for k in range(n):
        mark[k] = k
        for p in range(indptr[k], indptr[k + 1]):
            i = indices[p]
            if i >= k:
                continue
            while mark[i] != k:
                total += 1
                mark[i] = k
                i = parent[i]
    return total


@njit(cache=True)
def symbolic(indptr, indices, parent, n):
    """Lower CSC structure of the Cholesky factor via row subtrees."""
    mark = -np.ones(n, dtype=np.int64)
    counts = np.ones(n, dtype=np.int64)
    for k in range(n):
        mark[k] = k
        for p in range(indptr[k], indptr[k + 1]):
            i = indices[p]
            if i >= k:
                continue
            while mark[i] != k:
                counts[i] += 1
                mark[i] = k
                i = parent[i]
    colptr = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        colptr[j + 1] = colptr[j] + counts[j]
    rowidx = np.empty(colptr[n], dtype=np.int64)
    nxt = colptr[:n].copy()
    for j in range(n):
        rowidx[nxt[j]] = j
        nxt[j] += 1
    mark[:] = -1
    for k in range(n):
        mark[k] = k
        for p in range(indptr[k], indptr[k + 1]):
            i = indices[p]
            if i >= k:
                continue
            while mark[i] != k:
                rowidx[nxt[i]] = k
                nxt[i] += 1
                mark[i] = k
                i = parent[i]
    return colptr, rowidx


@njit(cache=True)
def clique_walk_ok(cp, ri):
    """True iff every column's rows form a clique reachable by the walk."""
    n = cp.size - 1
    for j in range(n):
        p0 = cp[j]
        p1 = cp[j + 1]
        for q in range(p0 + 1, p1):
            b = ri[q]
            pb = cp[b]
            pe = cp[b + 1]
            for r in range(q, p1):
                row = ri[r]
                while pb < pe and ri[pb] != row:
                    pb += 1
                if pb == pe:
                    return False
    return True


# ---------------------------------------------------------------- numeric


@njit(cache=True)
def cholesky(cp, ri, a):
    """In-place zero-fill Cholesky. Returns -1 or the failing column."""
    n = cp.size - 1
    for j in range(n):
        p0 = cp[j]
        p1 = cp[j + 1]
        d = a[p0]
        if not d > 0.0:
            return j
        ljj = np.sqrt(d)
        a[p0] = ljj
        for p in range(p0 + 1, p1):
            a[p] /= ljj
        for q in range(p0 + 1, p1):
            b = ri[q]
            lq = a[q]
            pb = cp[b]
            for r in range(q, p1):
                row = ri[r]
                while ri[pb] != row:
                    pb += 1
                a[pb] -= a[r] * lq
    return -1


@njit(cache=True)
def llt(cp, ri, l):
    n = cp.size - 1
    out = np.zeros_like(l)
    for j in range(n):
        p0 = cp[j]
        p1 = cp[j + 1]
        ljj = l[p0]
        for p in range(p0, p1):
            out[p] += l[p] * ljj
        for q in range(p0 + 1, p1):
            b = ri[q]
            lq = l[q]
            pb = cp[b]
            for r in range(q, p1):
                row = ri[r]
                while ri[pb] != row:
                    pb += 1
                out[pb] += l[r] * lq
    return out


@njit(cache=True)
def projected_inverse(cp, ri, l, kmax):
    n = cp.size - 1
    w = np.empty_like(l)
    u = np.empty(kmax)
    t = np.empty(kmax)
    for j in range(n - 1, -1, -1):
        p0 = cp[j]
        k = cp[j + 1] - p0 - 1
        ljj = l[p0]
        for q in range(k):
            u[q] = l[p0 + 1 + q] / ljj
            t[q] = 0.0
        for q in range(k):
            b = ri[p0 + 1 + q]
            pb = cp[b]
            for r in range(q, k):
                row = ri[p0 + 1 + r]
                while ri[pb] != row:
                    pb += 1
                v = w[pb]
                t[r] += v * u[q]
                if r != q:
                    t[q] += v * u[r]
        s = 0.0
        for q in range(k):
            w[p0 + 1 + q] = -t[q]
            s += t[q] * u[q]
        w[p0] = 1.0 / (ljj * ljj) + s
    return w


@njit(cache=True)
def packed_offsets(cp):
    n = cp.size - 1
    roff = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        k = cp[j + 1] - cp[j] - 1
        roff[j + 1] = roff[j] + k * (k + 1) // 2
    return roff


@njit(cache=True)
def _gather_chol(cp, ri, s, j, B, R, roff):
    """Factor W[I_j, I_j] into B (and R if given). False if not PD."""
    p0 = cp[j]
    k = cp[j + 1] - p0 - 1
    for q in range(k):
        b = ri[p0 + 1 + q]
        pb = cp[b]
        for r in range(q, k):
            row = ri[p0 + 1 + r]
            while ri[pb] != row:
                pb += 1
            B[r, q] = s[pb]
    for c in range(k):
        d = B[c, c]
        for t in range(c):
            d -= B[c, t] * B[c, t]
        if not d > 0.0:
            return False
        d = np.sqrt(d)
        B[c, c] = d
        for r in range(c + 1, k):
            v = B[r, c]
            for t in range(c):
                v -= B[r, t] * B[c, t]
            B[r, c] = v / d
    if R.size > 0:
        o = roff[j]
        for c in range(k):
            for t in range(c + 1):
                R[o] = B[c, t]
                o += 1
    return True


@njit(cache=True)
def complete(cp, ri, s, roff, kmax, store):
    """Cholesky factor of the X with P(X^{-1}) = S.

    Returns ``(l, R, fail)``; ``fail`` is -1 or the column whose clique block
    is not positive definite.
    """
    n = cp.size - 1
    l = np.empty_like(s)
    R = np.empty(roff[n] if store else 0)
    B = np.empty((kmax, kmax))
    r = np.empty(kmax)
    z = np.empty(kmax)
    for j in range(n):
        p0 = cp[j]
        k = cp[j + 1] - p0 - 1
        if not _gather_chol(cp, ri, s, j, B, R, roff):
            return l, R, j
        for c in range(k):
            v = s[p0 + 1 + c]
            for t in range(c):
                v -= B[c, t] * r[t]
            r[c] = v / B[c, c]
        rho2 = s[p0]
        for c in range(k):
            rho2 -= r[c] * r[c]
        if not rho2 > 0.0:
            return l, R, j
        for c in range(k - 1, -1, -1):
            v = r[c]
            for t in range(c + 1, k):
                v -= B[t, c] * z[t]
            z[c] = v / B[c, c]
        ljj = 1.0 / np.sqrt(rho2)
        l[p0] = ljj
        for c in range(k):
            l[p0 + 1 + c] = -z[c] * ljj
    return l, R, -1


@njit(cache=True)
def separator_factors(cp, ri, w, roff, kmax):
    """Packed Cholesky factors of W[I_j, I_j] for every column."""
    n = cp.size - 1
    R = np.empty(roff[n])
    B = np.empty((kmax, kmax))
    for j in range(n):
        if not _gather_chol(cp, ri, w, j, B, R, roff):
            return R, j
    return R, -1


@njit(cache=True)
def hess_f(cp, ri, l, w, y, kmax):
    """P(W Y W) as minus the derivative of the projected inverse."""
    n = cp.size - 1
    da = y.copy()
    dl = np.empty_like(l)
    for j in range(n):
        p0 = cp[j]
        p1 = cp[j + 1]
        ljj = l[p0]
        dljj = da[p0] / (2.0 * ljj)
        dl[p0] = dljj
        for p in range(p0 + 1, p1):
            dl[p] = (da[p] - l[p] * dljj) / ljj
        for q in range(p0 + 1, p1):
            b = ri[q]
            lq = l[q]
            dlq = dl[q]
            pb = cp[b]
            for r in range(q, p1):
                row = ri[r]
                while ri[pb] != row:
                    pb += 1
                da[pb] -= dl[r] * lq + l[r] * dlq
    out = np.empty_like(l)
    u = np.empty(kmax)
    du = np.empty(kmax)
    t = np.empty(kmax)
    dt = np.empty(kmax)
    for j in range(n - 1, -1, -1):
        p0 = cp[j]
        k = cp[j + 1] - p0 - 1
        ljj = l[p0]
        dljj = dl[p0]
        for q in range(k):
            u[q] = l[p0 + 1 + q] / ljj
            du[q] = (dl[p0 + 1 + q] - u[q] * dljj) / ljj
            t[q] = 0.0
            dt[q] = 0.0
        for q in range(k):
            b = ri[p0 + 1 + q]
            pb = cp[b]
            for r in range(q, k):
                row = ri[p0 + 1 + r]
                while ri[pb] != row:
                    pb += 1
                v = w[pb]
                dv = -out[pb]  # out holds -dW for columns already done
                t[r] += v * u[q]
                dt[r] += dv * u[q] + v * du[q]
                if r != q:
                    t[q] += v * u[r]
                    dt[q] += dv * u[r] + v * du[r]
        s = 0.0
        for q in range(k):
            out[p0 + 1 + q] = dt[q]
            s += dt[q] * u[q] + t[q] * du[q]
        out[p0] = 2.0 * dljj / (ljj * ljj * ljj) - s
    return out


@njit(cache=True)
def hess_fstar(cp, ri, l, s, R, roff, y, kmax):
    """Z with P(W Z W) = Y, by inverting the two recursions of hess_f."""
    n = cp.size - 1
    dl = np.empty_like(l)
    u = np.empty(kmax)
    g = np.empty(kmax)
    for j in range(n):
        p0 = cp[j]
        k = cp[j + 1] - p0 - 1
        ljj = l[p0]
        for q in range(k):
            u[q] = l[p0 + 1 + q] / ljj
            g[q] = -y[p0 + 1 + q]
        # g = dW[I,j] + dW[I,I] u with dW = -Y
        for q in range(k):
            b = ri[p0 + 1 + q]
            pb = cp[b]
            for r in range(q, k):
                row = ri[p0 + 1 + r]
                while ri[pb] != row:
                    pb += 1
                v = y[pb]
                g[r] -= v * u[q]
                if r != q:
                    g[q] -= v * u[r]
        # du = -W[I,I]^{-1} g via the packed factor
        o = roff[j]
        for c in range(k):
            row0 = o + c * (c + 1) // 2
            v = g[c]
            for t in range(c):
                v -= R[row0 + t] * g[t]
            g[c] = v / R[row0 + c]
        for c in range(k - 1, -1, -1):
            v = g[c]
            for t in range(c + 1, k):
                v -= R[o + t * (t + 1) // 2 + c] * g[t]
            g[c] = v / R[o + c * (c + 1) // 2 + c]
        acc = -y[p0]
        for q in range(k):
            du_q = -g[q]
            g[q] = du_q
            acc += -y[p0 + 1 + q] * u[q] + s[p0 + 1 + q] * du_q
        dljj = -acc * ljj * ljj * ljj / 2.0
        dl[p0] = dljj
        for q in range(k):
            dl[p0 + 1 + q] = g[q] * ljj + u[q] * dljj
    out = np.zeros_like(l)
    for j in range(n):
        p0 = cp[j]
        p1 = cp[j + 1]
        ljj = l[p0]
        dljj = dl[p0]
        for p in range(p0, p1):
            out[p] += dl[p] * ljj + l[p] * dljj
        for q in range(p0 + 1, p1):
            b = ri[q]
            lq = l[q]
            dlq = dl[q]
            pb = cp[b]
            for r in range(q, p1):
                row = ri[r]
                while ri[pb] != row:
                    pb += 1
                out[pb] += dl[r] * lq + l[r] * dlq
    return out


@njit(cache=True)
def lsolve(cp, ri, l, b):
    """Solve L x = b."""
    n = cp.size - 1
    x = b.copy()
    for j in range(n):
        p0 = cp[j]
        xj = x[j] / l[p0]
        x[j] = xj
        for p in range(p0 + 1, cp[j + 1]):
            x[ri[p]] -= l[p] * xj
    return x


@njit(cache=True)
def ltsolve(cp, ri, l, b):
    """Solve L^T X = B for a 2-D ``B`` of shape (n, m)."""
    n = cp.size - 1
    m = b.shape[1]
    x = b.copy()
    for j in range(n - 1, -1, -1):
        p0 = cp[j]
        for p in range(p0 + 1, cp[j + 1]):
            lp = l[p]
            i = ri[p]
            for c in range(m):
                x[j, c] -= lp * x[i, c]
        d = l[p0]
        for c in range(m):
            x[j, c] /= d
    return x


# ---------------------------------------------------------------- dense oracle


@njit(cache=True)
def maxdet_sweeps(W, P, mi, mj, tol, max_sweeps):
    """Cyclic coordinate ascent for the max-det completion.

    Each step sets ``W[i, j]`` (a missing entry) so that ``inv(W)[i, j] = 0``:
    with ``K = {i, j}`` the Schur complement ``inv(P[K, K])`` must become
    diagonal, which changes ``W[i, j]`` by ``P_ij / det(P[K, K])``. ``P`` is
    kept equal to ``inv(W)`` by a rank-2 update and refreshed every sweep.
    Returns ``(sweeps, residual)``; sweeps is -1 on hitting the cap.
    """
    n = W.shape[0]
    ne = mi.size
    pi = np.empty(n)
    pj = np.empty(n)
    res = np.inf
    for sweep in range(max_sweeps):
        for e in range(ne):
            i = mi[e]
            j = mj[e]
            a = P[i, i]
            b = P[i, j]
            d = P[j, j]
            if b == 0.0:
                continue
            det = a * d - b * b
            t = b / det
            W[i, j] += t
            W[j, i] += t
            c = b + 1.0 / t
            dm = a * d - c * c
            for r in range(n):
                pi[r] = P[r, i]
                pj[r] = P[r, j]
            for r in range(n):
                ur = (d * pi[r] - c * pj[r]) / dm
                vr = (a * pj[r] - c * pi[r]) / dm
                for s in range(n):
                    P[r, s] -= ur * pi[s] + vr * pj[s]
        P[:, :] = np.linalg.inv(W)
        res = 0.0
        for e in range(ne):
            v = abs(P[mi[e], mj[e]])
            if v > res:
                res = v
        if res <= tol:
            return sweep + 1, res
    return -1, res
