"""Matrix Market ingestion, parameter-set generation and CSV persistence."""

from __future__ import annotations

import itertools
import os
import tempfile

import numpy as np
import scipy.sparse as sp


class MatrixMarketParseError(RuntimeError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


def read_matrix_market(path):
    """Parse a real Matrix Market file (coordinate or array, general or symmetric).

    1-based indices are converted internally; symmetric storage is expanded to
    the full pattern.  Returns a CSR matrix.
    """
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketParseError(path, 1, "empty file")
    header = lines[0].strip().split()
    if (len(header) != 5 or header[0] != "%%MatrixMarket"
            or header[1].lower() != "matrix"):
        raise MatrixMarketParseError(path, 1, f"malformed header: {lines[0].strip()!r}")
    layout, dtype, symmetry = (h.lower() for h in header[2:5])
    if layout not in ("coordinate", "array"):
        raise MatrixMarketParseError(path, 1, f"unsupported layout {layout!r}")
    if dtype not in ("real", "integer"):
        raise MatrixMarketParseError(path, 1, f"unsupported field {dtype!r}")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketParseError(path, 1, f"unsupported symmetry {symmetry!r}")

    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines[1:], start=1)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketParseError(path, len(lines), "missing size line")
    size_lineno, size_line = body[0]
    parts = size_line.split()

    if layout == "coordinate":
        if len(parts) != 3:
            raise MatrixMarketParseError(path, size_lineno, "size line must be 'rows cols nnz'")
        try:
            rows, cols, nnz = (int(p) for p in parts)
        except ValueError:
            raise MatrixMarketParseError(path, size_lineno, "non-integer size line") from None
        entries = body[1:]
        if len(entries) != nnz:
            raise MatrixMarketParseError(
                path, size_lineno,
                f"entry count mismatch: header says {nnz}, found {len(entries)}",
            )
        I = np.empty(nnz, dtype=int)
        J = np.empty(nnz, dtype=int)
        V = np.empty(nnz)
        for k, (lineno, line) in enumerate(entries):
            fields = line.split()
            if len(fields) != 3:
                raise MatrixMarketParseError(path, lineno, f"expected 'i j value', got {line!r}")
            try:
                i, j, v = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError:
                raise MatrixMarketParseError(path, lineno, f"unparsable entry {line!r}") from None
            if not (1 <= i <= rows and 1 <= j <= cols):
                raise MatrixMarketParseError(path, lineno, f"index ({i},{j}) out of range")
            I[k], J[k], V[k] = i - 1, j - 1, v
        if symmetry == "symmetric":
            off = I != J
            I, J, V = (np.concatenate([I, J[off]]),
                       np.concatenate([J, I[off]]),
                       np.concatenate([V, V[off]]))
        return sp.coo_matrix((V, (I, J)), shape=(rows, cols)).tocsr()

    # array layout: column-major dense values
    if len(parts) != 2:
        raise MatrixMarketParseError(path, size_lineno, "size line must be 'rows cols'")
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError:
        raise MatrixMarketParseError(path, size_lineno, "non-integer size line") from None
    expected = rows * cols if symmetry == "general" else rows * (rows + 1) // 2
    entries = body[1:]
    if len(entries) != expected:
        raise MatrixMarketParseError(
            path, size_lineno,
            f"entry count mismatch: expected {expected}, found {len(entries)}",
        )
    vals = np.empty(expected)
    for k, (lineno, line) in enumerate(entries):
        try:
            vals[k] = float(line.split()[0])
        except (ValueError, IndexError):
            raise MatrixMarketParseError(path, lineno, f"unparsable value {line!r}") from None
    M = np.zeros((rows, cols))
    if symmetry == "general":
        M[:] = vals.reshape((cols, rows)).T
    else:
        k = 0
        for j in range(cols):
            for i in range(j, rows):
                M[i, j] = vals[k]
                M[j, i] = vals[k]
                k += 1
    return sp.csr_matrix(M)


def write_matrix_market(path, M, symmetric=False):
    """Write a sparse matrix in coordinate real format (17 significant digits)."""
    M = sp.coo_matrix(M)
    sym = "symmetric" if symmetric else "general"
    rows = []
    for i, j, v in zip(M.row, M.col, M.data):
        if symmetric and j > i:
            continue
        rows.append(f"{i + 1} {j + 1} {v:.17g}")
    text = (f"%%MatrixMarket matrix coordinate real {sym}\n"
            f"{M.shape[0]} {M.shape[1]} {len(rows)}\n"
            + "\n".join(rows) + ("\n" if rows else ""))
    atomic_write_text(path, text)


def atomic_write_text(path, text):
    """Write via temp file + rename so interrupted runs never truncate files."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def generate_parameter_set(domain, mode, *, seed=None, count=None, counts=None):
    """Ordered parameter samples inside an axis-aligned box.

    mode "random" draws ``count`` uniform points from numpy's seeded PCG64
    generator; "equidistant" / "log_equidistant" build tensor grids with both
    endpoints included, enumerated in row-major axis order.
    """
    domain = np.asarray(domain, dtype=float)
    d = domain.shape[0]
    if mode == "random":
        if count is None or count < 1 or seed is None:
            raise ValueError("random mode needs a seed and a positive count")
        rng = np.random.default_rng(int(seed))
        lo, hi = domain[:, 0], domain[:, 1]
        pts = lo + rng.random((count, d)) * (hi - lo)
        return [pts[i] for i in range(count)]
    if mode in ("equidistant", "log_equidistant"):
        if counts is None:
            raise ValueError(f"{mode} mode needs per-axis counts")
        counts = [int(c) for c in (counts if np.iterable(counts) else [counts] * d)]
        if len(counts) != d or any(c < 1 for c in counts):
            raise ValueError("counts must give one positive integer per axis")
        axes = []
        for (lo, hi), c in zip(domain, counts):
            if mode == "log_equidistant":
                if lo <= 0:
                    raise ValueError("log spacing needs strictly positive bounds")
                axes.append(np.logspace(np.log10(lo), np.log10(hi), c))
            else:
                axes.append(np.linspace(lo, hi, c))
        return [np.array(p) for p in itertools.product(*axes)]
    raise ValueError(f"unknown sampling mode {mode!r}")


def _fmt(x):
    return f"{float(x):.17g}"


def _meta_lines(meta):
    return [f"# {k}={v}" for k, v in (meta or {}).items()]


def write_trace_csv(trace, path, d, meta=None):
    """Persist a greedy trace; one row per iteration."""
    mu_cols = ",".join(f"mu_star_{j + 1}" for j in range(d))
    header = (f"iteration,{mu_cols},delta_max,card_coarse,r,l_deim,"
              "n_add,n_del,wall_seconds")
    lines = _meta_lines(meta) + [header]
    for rec in trace.iterations:
        mu = ",".join(_fmt(v) for v in rec.mu_star)
        lines.append(
            f"{rec.iteration},{mu},{_fmt(rec.delta_max)},{rec.card_coarse},"
            f"{rec.r},{rec.l_deim},{rec.n_add},{rec.n_del},"
            f"{rec.wall_seconds:.3f}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_error_csv(params, eps, path, meta=None):
    """Persist per-test-parameter errors."""
    params = [np.atleast_1d(p) for p in params]
    d = len(params[0]) if params else 0
    cols = ",".join(f"param_{j + 1}" for j in range(d))
    header = f"index,{cols},epsilon" if d else "index,epsilon"
    lines = _meta_lines(meta) + [header]
    for i, (p, e) in enumerate(zip(params, eps)):
        pv = ",".join(_fmt(v) for v in p)
        lines.append(f"{i},{pv},{_fmt(e)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_error_csv(path):
    """Read back an error CSV; returns (params, eps)."""
    params, eps = [], []
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    for row in rows[1:]:
        fields = row.split(",")
        params.append(np.array([float(v) for v in fields[1:-1]]))
        eps.append(float(fields[-1]))
    return params, np.array(eps)
