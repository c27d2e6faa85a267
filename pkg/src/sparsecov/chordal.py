"""Chordal embedding of a sparsity pattern.

A fill-reducing ordering is computed, the pattern is eliminated symbolically
under it, and the filled pattern (that of ``L + L^T``) is the chordal
embedding. The numeric kernels in :mod:`sparsecov.barrier` work on the
permuted lower-triangular structure kept in :class:`ChordalEmbedding`.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import reverse_cuthill_mckee

from . import _kernels
from .exceptions import InputError, SparseCovError
from .sparse_sym import SparseSymMatrix, SparsityPattern

__all__ = [
    "Ordering",
    "ChordalEmbedding",
    "CliqueTree",
    "EdgeBasis",
    "fill_reducing_order",
    "fill_count",
    "symbolic_embed",
    "build_clique_tree",
    "edge_basis",
    "embed",
]


class Ordering:
    """Elimination order: ``perm[k]`` is the vertex eliminated ``k``-th."""

    __slots__ = ("perm", "iperm")

    def __init__(self, perm):
        perm = np.asarray(perm, dtype=np.int64).ravel()
        n = perm.size
        iperm = np.full(n, -1, dtype=np.int64)
        if n and (perm.min() < 0 or perm.max() >= n):
            raise InputError("ordering index out of range")
        iperm[perm] = np.arange(n)
        if np.any(iperm < 0):
            raise InputError("ordering is not a permutation")
        perm.setflags(write=False)
        iperm.setflags(write=False)
        self.perm = perm
        self.iperm = iperm

    @property
    def n(self):
        return self.perm.size

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n))

    def __repr__(self):
        return f"Ordering(n={self.n})"


def _min_degree(P):
    # Exact minimum degree on the elimination graph, ties to the smallest
    # vertex. A lazy heap holds (degree, vertex) and stale keys are skipped.
    A = P.adjacency()
    ptr, idx = A.indptr, A.indices.tolist()
    adj = [set(idx[ptr[i] : ptr[i + 1]]) for i in range(P.n)]
    heap = [(len(a), i) for i, a in enumerate(adj)]
    heapq.heapify(heap)
    order = []
    while heap:
        d, v = heapq.heappop(heap)
        nb = adj[v]
        if nb is None or d != len(nb):
            continue
        order.append(v)
        adj[v] = None
        for u in nb:
            au = adj[u]
            au.discard(v)
            au |= nb
            au.discard(u)
            heapq.heappush(heap, (len(au), u))
    return order


def fill_reducing_order(G, method="auto"):
    """Heuristic elimination ordering for ``G``.

    ``method`` is one of ``"mindegree"``, ``"rcm"`` (reverse Cuthill-McKee),
    ``"natural"``, or ``"auto"``: run all three and keep the one with the
    least fill, preferring that order on ties.
    """
    if method == "natural":
        return Ordering.identity(G.n)
    if method == "mindegree":
        return Ordering(_min_degree(G))
    if method == "rcm":
        A = G.adjacency()
        return Ordering(reverse_cuthill_mckee(A, symmetric_mode=True))
    if method != "auto":
        raise InputError(f"unknown ordering method {method!r}")
    best, best_fill = None, None
    for m in ("mindegree", "rcm", "natural"):
        o = fill_reducing_order(G, m)
        fill = fill_count(G, o)
        if best is None or fill < best_fill:
            best, best_fill = o, fill
    return best


def fill_count(G, ordering):
    """Number of stored entries of ``L`` (lower, with diagonal) under ``ordering``."""
    indptr, indices = _permuted_adjacency(G, ordering.perm, ordering.iperm)
    return int(_kernels.symbolic_nnz(indptr, indices, G.n))


def _permuted_adjacency(P, perm, iperm):
    A = P.adjacency()
    B = A[perm][:, perm].tocsr()
    B.sort_indices()
    return B.indptr.astype(np.int64), B.indices.astype(np.int64)


@dataclass(eq=False)
class ChordalEmbedding:
    """Chordal embedding ``Gt`` of ``G`` together with its elimination data.

    ``cp``/``ri`` hold the lower structure of ``Gt`` in elimination order
    (rows sorted, diagonal first). ``pos[p]`` is the storage slot in ``Gt``
    of permuted slot ``p`` and ``ipos`` its inverse. ``parent`` is the
    elimination tree in permuted labels.
    """

    G: SparsityPattern
    Gt: SparsityPattern
    ordering: Ordering
    parent: np.ndarray
    cp: np.ndarray
    ri: np.ndarray
    pos: np.ndarray
    ipos: np.ndarray
    in_G: np.ndarray
    added: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.G.n

    @property
    def m(self):
        """Number of added edges."""
        return int(self.added.size)

    @property
    def etree(self):
        """Elimination tree in original vertex labels (``-1`` for roots)."""
        perm = self.ordering.perm
        out = np.full(self.n, -1, dtype=np.int64)
        has = self.parent >= 0
        out[perm[has]] = perm[self.parent[has]]
        return out

    @property
    def added_edges(self):
        """``(m, 2)`` array of added pairs ``(i, j)``, ``i < j``, sorted."""
        return self.Gt.entries[self.added]

    @property
    def kmax(self):
        """Largest column count of the factor (largest clique size)."""
        return int(np.diff(self.cp).max()) if self.n else 0

    def to_perm(self, values):
        """Values on ``Gt`` (storage order) to permuted order."""
        return np.ascontiguousarray(values[self.pos])

    def from_perm(self, pvalues):
        return np.ascontiguousarray(pvalues[self.ipos])

    def lift(self, M):
        """Values of ``M`` placed on ``Gt``; entries outside ``M`` are zero."""
        from .sparse_sym import project

        return project(M, self.Gt)

    def verify(self):
        """Zero-fill test: eliminating ``Gt`` in the stored order adds nothing."""
        perm, iperm = self.ordering.perm, self.ordering.iperm
        indptr, indices = _permuted_adjacency(self.Gt, perm, iperm)
        parent = _kernels.etree(indptr, indices, self.n)
        cp, _ = _kernels.symbolic(indptr, indices, parent, self.n)
        return bool(cp[-1] == self.Gt.nnz) and bool(_kernels.clique_walk_ok(self.cp, self.ri))


def symbolic_embed(G, ordering=None):
    """Chordal embedding of ``G`` as the symbolic Cholesky pattern.

    ``ordering`` may be an :class:`Ordering`, a permutation array, or None
    for the default fill-reducing order.
    """
    if ordering is None:
        ordering = fill_reducing_order(G)
    elif not isinstance(ordering, Ordering):
        ordering = Ordering(ordering)
    if ordering.n != G.n:
        raise InputError(f"ordering has length {ordering.n}, pattern has n = {G.n}")
    n = G.n
    perm, iperm = ordering.perm, ordering.iperm
    indptr, indices = _permuted_adjacency(G, perm, iperm)
    parent = _kernels.etree(indptr, indices, n)
    cp, ri = _kernels.symbolic(indptr, indices, parent, n)
    pcols = np.repeat(np.arange(n, dtype=np.int64), np.diff(cp))
    orow, ocol = perm[ri], perm[pcols]
    Gt = SparsityPattern.from_lower(n, orow, ocol)
    pos = Gt.locate(orow, ocol)
    ipos = np.empty_like(pos)
    ipos[pos] = np.arange(pos.size)
    in_G = G.locate(Gt.cols, Gt.rowidx) >= 0
    added = np.flatnonzero(~in_G)
    for a in (parent, cp, ri, pos, ipos, in_G, added):
        a.setflags(write=False)
    return ChordalEmbedding(G, Gt, ordering, parent, cp, ri, pos, ipos, in_G, added)


def embed(G, method="auto"):
    """Shorthand for ``symbolic_embed(G, fill_reducing_order(G, method))``."""
    return symbolic_embed(G, fill_reducing_order(G, method))


@dataclass(eq=False)
class CliqueTree:
    """Maximal cliques of ``Gt`` arranged as a tree.

    Clique ``s`` is ``supernodes[s]`` (its own columns, in elimination order)
    plus ``separators[s]``, its intersection with the parent clique. All
    labels are original vertex indices. ``postorder`` lists children before
    parents.
    """

    supernodes: list
    separators: list
    parent: np.ndarray
    postorder: np.ndarray
    snode_of: np.ndarray

    def __len__(self):
        return len(self.supernodes)

    @property
    def cliques(self):
        return [np.concatenate([s, t]) for s, t in zip(self.supernodes, self.separators)]

    @property
    def max_clique(self):
        return max((len(s) + len(t) for s, t in zip(self.supernodes, self.separators)), default=0)


def build_clique_tree(E):
    """Clique tree of the embedding; raises if ``E`` fails the zero-fill test."""
    if not E.verify():
        raise SparseCovError("embedding is not a perfect elimination structure")
    n = E.n
    cp, ri, parent = E.cp, E.ri, E.parent
    cnt = np.diff(cp)
    # Column j's clique is not maximal iff a child c has J_c = {c} U J_j;
    # j then extends c's supernode.
    ext = np.full(n, -1, dtype=np.int64)
    for c in range(n):
        p = parent[c]
        if p >= 0 and cnt[c] == cnt[p] + 1 and ext[p] < 0:
            ext[p] = c
    # the chain c -> p need not be contiguous in elimination order
    snode_of = np.empty(n, dtype=np.int64)
    members = []
    for j in range(n):
        if ext[j] >= 0:
            s = snode_of[ext[j]]
            members[s].append(j)
        else:
            s = len(members)
            members.append([j])
        snode_of[j] = s
    ns = len(members)
    perm = E.ordering.perm
    sparent = np.full(ns, -1, dtype=np.int64)
    supernodes, separators = [], []
    for s in range(ns):
        t = members[s][-1]
        supernodes.append(perm[np.asarray(members[s], dtype=np.int64)])
        separators.append(perm[ri[cp[t] + 1 : cp[t + 1]]])
        if parent[t] >= 0:
            sparent[s] = snode_of[parent[t]]
    # postorder by DFS from the roots
    children = [[] for _ in range(ns)]
    roots = []
    for s in range(ns):
        (children[sparent[s]] if sparent[s] >= 0 else roots).append(s)
    post = []
    stack = [(r, False) for r in reversed(roots)]
    while stack:
        s, done = stack.pop()
        if done:
            post.append(s)
            continue
        stack.append((s, True))
        stack.extend((c, False) for c in reversed(children[s]))
    snode_orig = np.empty(n, dtype=np.int64)
    snode_orig[perm] = snode_of
    return CliqueTree(supernodes, separators, sparent, np.asarray(post, dtype=np.int64), snode_orig)


SQRT2 = np.sqrt(2.0)


class EdgeBasis:
    """Orthonormal basis of the added edges.

    ``A(y)`` puts ``y_k / sqrt(2)`` on both entries of added edge ``k``, so
    ``||A(y)||_F = ||y||_2`` and ``A^T A`` is the identity.
    """

    scale = 1.0 / SQRT2

    def __init__(self, E):
        self.embedding = E
        self.positions = E.added  # storage slots in Gt, sorted order
        self.ppositions = np.ascontiguousarray(E.ipos[E.added])  # slots in permuted order
        self.positions.setflags(write=False)
        self.ppositions.setflags(write=False)

    @property
    def m(self):
        return int(self.positions.size)

    @property
    def edges(self):
        return self.embedding.Gt.entries[self.positions]

    def A(self, y):
        """Matrix on ``Gt`` with the basis combination ``sum_k y_k A_k``."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m,):
            raise InputError(f"expected a vector of length {self.m}")
        v = np.zeros(self.embedding.Gt.nnz)
        v[self.positions] = y * self.scale
        return SparseSymMatrix(self.embedding.Gt, v)

    def AT(self, M):
        """Coefficients ``<A_k, M>`` for ``M`` on ``Gt``."""
        if isinstance(M, SparseSymMatrix):
            if M.pattern is not self.embedding.Gt and M.pattern != self.embedding.Gt:
                from .sparse_sym import project

                M = project(M, self.embedding.Gt)
            M = M.values
        return SQRT2 * np.asarray(M)[self.positions]

    # permuted-order variants used by the solver
    def A_perm(self, y, out=None):
        if out is None:
            out = np.zeros(self.embedding.Gt.nnz)
        out[self.ppositions] = y * self.scale
        return out

    def AT_perm(self, pvalues):
        return SQRT2 * pvalues[self.ppositions]

    def __repr__(self):
        return f"EdgeBasis(m={self.m})"


def edge_basis(E):
    return EdgeBasis(E)
