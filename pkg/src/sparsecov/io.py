"""File formats: Matrix Market (symmetric coordinate) and sample files.

Sample files come in two flavours. Text: a header line ``n N`` followed by
``N`` lines of ``n`` numbers, one sample per line. Binary: the magic bytes
``SMPL``, two little-endian int64 counts ``n`` and ``N``, then the ``n x N``
data as column-major little-endian float64 (again one sample after another).
"""

from __future__ import annotations

import io as _io
import struct

import numpy as np

from .exceptions import InputError
from .sparse_sym import SampleMatrix, SparseSymMatrix, SparsityPattern

__all__ = [
    "read_matrix_market",
    "write_matrix_market",
    "read_pattern",
    "read_samples",
    "write_samples",
    "read_lambda_table",
    "write_lambda_table",
]

_MAGIC = b"SMPL"
_FIELDS = ("real", "integer", "pattern", "double")
_SYMMETRY = ("symmetric", "general")


def _open_text(path):
    try:
        return open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None


def _parse_mm(path):
    """Returns ``(n, rows, cols, vals, comments)`` with 0-based indices.

    ``comments`` holds ``(line, text)`` pairs.
    """
    with _open_text(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InputError("empty file, expected a Matrix Market header", line=1)
    head = lines[0].split()
    if len(head) != 5 or head[0] != "%%MatrixMarket":
        raise InputError("expected '%%MatrixMarket matrix coordinate <field> <symmetry>'", line=1)
    obj, fmt, fld, sym = (h.lower() for h in head[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise InputError(f"unsupported Matrix Market type '{obj} {fmt}'", line=1)
    if fld not in _FIELDS:
        raise InputError(f"unsupported field '{fld}'", line=1)
    if sym not in _SYMMETRY:
        raise InputError(f"unsupported symmetry '{sym}'", line=1)
    comments = []
    k = 1
    while k < len(lines) and (not lines[k].strip() or lines[k].lstrip().startswith("%")):
        if lines[k].lstrip().startswith("%"):
            comments.append((k + 1, lines[k].lstrip()[1:].strip()))
        k += 1
    if k == len(lines):
        raise InputError("missing size line", line=k + 1)
    try:
        nr, nc, nnz = (int(t) for t in lines[k].split())
    except ValueError:
        raise InputError("size line must be 'rows cols entries'", line=k + 1) from None
    if nr != nc or nr < 1 or nnz < 0:
        raise InputError(f"matrix must be square and non-empty, got {nr} x {nc}", line=k + 1)
    n = nr
    want = 2 if fld == "pattern" else 3
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.ones(nnz)
    lineno = np.empty(nnz, dtype=np.int64)
    e = 0
    for ln in range(k + 1, len(lines)):
        s = lines[ln].strip()
        if not s or s.startswith("%"):
            continue
        if e == nnz:
            raise InputError(f"more than the declared {nnz} entries", line=ln + 1)
        tok = s.split()
        if len(tok) != want:
            raise InputError(f"expected {want} fields per entry, got {len(tok)}", line=ln + 1)
        try:
            i, j = int(tok[0]), int(tok[1])
            v = float(tok[2]) if want == 3 else 1.0
        except ValueError:
            raise InputError(f"cannot parse entry '{s}'", line=ln + 1) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise InputError(f"index ({i}, {j}) out of range for n = {n}", line=ln + 1)
        if not np.isfinite(v):
            raise InputError("non-finite value", line=ln + 1)
        rows[e], cols[e], vals[e], lineno[e] = i - 1, j - 1, v, ln + 1
        e += 1
    if e != nnz:
        raise InputError(f"expected {nnz} entries, found {e}", line=len(lines))
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    if sym == "symmetric":
        keys = lo * n + hi
        order = np.argsort(keys, kind="stable")
        dup = np.flatnonzero(np.diff(keys[order]) == 0)
        if dup.size:
            b = order[dup[0] + 1]
            raise InputError(f"duplicate entry ({rows[b] + 1}, {cols[b] + 1})", line=int(lineno[b]))
        return n, rows, cols, vals, comments
    # general storage: both triangles listed, values must mirror exactly
    seen = {}
    for e in range(nnz):
        key = (int(rows[e]), int(cols[e]))
        if key in seen:
            raise InputError(f"duplicate entry ({key[0] + 1}, {key[1] + 1})", line=int(lineno[e]))
        seen[key] = e
    keep = np.zeros(nnz, dtype=bool)
    for (i, j), e in seen.items():
        m = seen.get((j, i))
        if m is None or vals[m] != vals[e]:
            raise InputError(f"matrix is not symmetric at ({i + 1}, {j + 1})", line=int(lineno[e]))
        keep[e] = i >= j
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    return n, rows, cols, vals, comments


def read_matrix_market(path):
    """Read a symmetric matrix; unlisted diagonal entries are zero."""
    n, rows, cols, vals, _ = _parse_mm(path)
    P = SparsityPattern.from_lower(n, rows, cols)
    v = np.zeros(P.nnz)
    v[P.locate(rows, cols)] = vals
    return SparseSymMatrix(P, v)


def read_pattern(path):
    """Pattern of all listed entries (values are ignored)."""
    n, rows, cols, _, _ = _parse_mm(path)
    return SparsityPattern.from_lower(n, rows, cols)


def _fmt(v):
    return repr(float(v))


def write_matrix_market(path, M, comments=()):
    """Write ``M`` (lower triangle) in symmetric coordinate format.

    ``M`` may be a :class:`SparseSymMatrix` or a :class:`SparsityPattern`
    (written with the ``pattern`` field).
    """
    if isinstance(M, SparsityPattern):
        P, vals, fld = M, None, "pattern"
    else:
        P, vals, fld = M.pattern, M.values, "real"
    buf = _io.StringIO()
    buf.write(f"%%MatrixMarket matrix coordinate {fld} symmetric\n")
    for c in comments:
        buf.write(f"% {c}\n")
    buf.write(f"{P.n} {P.n} {P.nnz}\n")
    r1, c1 = P.rowidx + 1, P.cols + 1
    if vals is None:
        for a, b in zip(r1.tolist(), c1.tolist()):
            buf.write(f"{a} {b}\n")
    else:
        for a, b, v in zip(r1.tolist(), c1.tolist(), vals.tolist()):
            buf.write(f"{a} {b} {_fmt(v)}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def read_lambda_table(path):
    """Per-pair penalties from a Matrix Market file.

    Listed off-diagonal entries give ``lambda_ij``; a comment line
    ``% default: V`` sets the value for unlisted pairs (0 if absent).
    """
    from .threshold import LambdaSpec

    n, rows, cols, vals, comments = _parse_mm(path)
    default = 0.0
    for line, c in comments:
        if c.lower().startswith("default:"):
            try:
                default = float(c.split(":", 1)[1])
            except ValueError:
                raise InputError(f"bad default line '% {c}'", line) from None
    off = rows != cols
    P = SparsityPattern.from_lower(n, rows[off], cols[off])
    v = np.full(P.nnz, default)
    v[P.locate(rows[off], cols[off])] = vals[off]
    return LambdaSpec(SparseSymMatrix(P, v), default=default)


def write_lambda_table(path, lam):
    table = lam.table
    write_matrix_market(path, table, comments=[f"default: {_fmt(lam.default)}"])


def read_samples(path, center=True):
    """Read a text or binary sample file into a :class:`SampleMatrix`."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic == _MAGIC:
                hdr = fh.read(16)
                if len(hdr) != 16:
                    raise InputError("truncated binary sample header")
                n, N = struct.unpack("<qq", hdr)
                if n < 1 or N < 1:
                    raise InputError(f"invalid sample counts n = {n}, N = {N}")
                raw = fh.read()
                if len(raw) != 8 * n * N:
                    raise InputError(f"expected {8 * n * N} data bytes, found {len(raw)}")
                data = np.frombuffer(raw, dtype="<f8").reshape(N, n)
                return SampleMatrix(data.T, center=center)
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    return _read_text_samples(path, center)


def _read_text_samples(path, center):
    with _open_text(path) as fh:
        lines = fh.read().splitlines()
    k = 0
    while k < len(lines) and not lines[k].strip():
        k += 1
    if k == len(lines):
        raise InputError("empty sample file", line=1)
    try:
        n, N = (int(t) for t in lines[k].split())
    except ValueError:
        raise InputError("header must be 'n N'", line=k + 1) from None
    if n < 1 or N < 1:
        raise InputError(f"invalid sample counts n = {n}, N = {N}", line=k + 1)
    data = np.empty((N, n))
    r = 0
    for ln in range(k + 1, len(lines)):
        s = lines[ln].split()
        if not s:
            continue
        if r == N:
            raise InputError(f"more than the declared {N} samples", line=ln + 1)
        if len(s) != n:
            raise InputError(f"expected {n} values, got {len(s)}", line=ln + 1)
        try:
            data[r] = [float(t) for t in s]
        except ValueError:
            raise InputError("cannot parse sample values", line=ln + 1) from None
        if not np.all(np.isfinite(data[r])):
            raise InputError("non-finite sample value", line=ln + 1)
        r += 1
    if r != N:
        raise InputError(f"expected {N} samples, found {r}", line=len(lines))
    return SampleMatrix(data.T, center=center)


def write_samples(path, X, binary=False):
    """Write a :class:`SampleMatrix` (or ``(N, n)`` array of samples)."""
    data = X.data.T if isinstance(X, SampleMatrix) else np.asarray(X, dtype=np.float64)
    N, n = data.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<qq", n, N))
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {N}\n")
        for row in data:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")

