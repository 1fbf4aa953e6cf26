"""MatrixMarket and CSV serialisation."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError
from .problems import ImageDemoRow, PathRecord, SweepRow

__all__ = [
    "read_matrix",
    "write_matrix",
    "read_vector",
    "write_vector",
    "format_float",
    "write_records",
    "read_records",
    "atomic_write_text",
    "PATH_COLUMNS",
    "SWEEP_COLUMNS",
    "IMAGE_COLUMNS",
    "TRACE_COLUMNS",
    "write_trace",
]

PATH_COLUMNS = ("tau", "residual_norm", "percent_error", "f1_value", "iterations", "wall_seconds")
SWEEP_COLUMNS = ("nnz", "noise_fraction", "solver", "median_min_percent_error")
IMAGE_COLUMNS = ("trial", "method", "percent_error", "tau")
TRACE_COLUMNS = ("iteration", "sigma", "h_value", "f1_value", "residual_norm", "step", "nonzeros", "beta", "flagged")

_MAX_ENTRIES = 10**9


def format_float(v) -> str:
    """Round-trip exact decimal text (17 significant digits)."""
    return format(float(v), ".17g")


def atomic_write_text(path, text: str):
    """Write `text` via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path, M, comment: str = ""):
    """Dense MatrixMarket array file; vectors become one column."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    lines = ["%%MatrixMarket matrix array real general"]
    for c in comment.splitlines():
        lines.append("% " + c)
    lines.append(f"{M.shape[0]} {M.shape[1]}")
    lines.extend(format_float(v) for v in M.ravel(order="F"))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_vector(path, v, comment: str = ""):
    write_matrix(path, np.asarray(v, dtype=float).reshape(-1), comment)


def _ints(tokens, count, path, lineno):
    if len(tokens) != count:
        raise ParseError(f"expected {count} integers, got {len(tokens)} fields", path=path, line=lineno)
    try:
        vals = [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"malformed integer in {' '.join(tokens)!r}", path=path, line=lineno) from None
    return vals


def _real(token, path, lineno):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"malformed real value {token!r}", path=path, line=lineno) from None


def read_matrix(path) -> np.ndarray:
    """Read a real MatrixMarket array or coordinate file into a dense matrix.

    ``general``, ``symmetric`` and ``skew-symmetric`` storage are accepted.

    Raises
    ------
    ParseError
        With the offending line number for malformed headers, unsupported
        fields, bad sizes or entries.
    """
    path = str(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", path=path, line=1)
    head = lines[0].split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket":
        raise ParseError("missing '%%MatrixMarket' header", path=path, line=1)
    obj, fmt, fld, sym = (h.lower() for h in head[1:])
    if obj != "matrix":
        raise ParseError(f"unsupported object {obj!r}", path=path, line=1)
    if fmt not in ("array", "coordinate"):
        raise ParseError(f"unsupported format {fmt!r}", path=path, line=1)
    if fld not in ("real", "integer", "double"):
        raise ParseError(f"unsupported field {fld!r}, only real values are accepted", path=path, line=1)
    if sym not in ("general", "symmetric", "skew-symmetric"):
        raise ParseError(f"unsupported symmetry {sym!r}", path=path, line=1)

    body = ((i + 1, ln.split()) for i, ln in enumerate(lines) if i > 0 and ln.strip() and not ln.lstrip().startswith("%"))
    try:
        lineno, tokens = next(body)
    except StopIteration:
        raise ParseError("missing size line", path=path, line=len(lines)) from None
    if fmt == "array":
        m, n = _ints(tokens, 2, path, lineno)
    else:
        m, n, nnz = _ints(tokens, 3, path, lineno)
    if m < 1 or n < 1 or m * n > _MAX_ENTRIES:
        raise ParseError(f"unsupported dimensions {m}x{n}", path=path, line=lineno)
    if sym != "general" and m != n:
        raise ParseError(f"{sym} storage needs a square matrix, got {m}x{n}", path=path, line=lineno)
    M = np.zeros((m, n))
    sign = -1.0 if sym == "skew-symmetric" else 1.0

    if fmt == "array":
        if sym == "general":
            slots = [(i, j) for j in range(n) for i in range(m)]
        else:
            start = 1 if sym == "skew-symmetric" else 0
            slots = [(i, j) for j in range(n) for i in range(j + start, m)]
        k = 0
        for lineno, tokens in body:
            if len(tokens) != 1:
                raise ParseError(f"expected one value, got {len(tokens)} fields", path=path, line=lineno)
            if k >= len(slots):
                raise ParseError(f"more than {len(slots)} values", path=path, line=lineno)
            i, j = slots[k]
            M[i, j] = _real(tokens[0], path, lineno)
            if i != j and sym != "general":
                M[j, i] = sign * M[i, j]
            k += 1
        if k != len(slots):
            raise ParseError(f"expected {len(slots)} values, found {k}", path=path, line=len(lines))
        return M

    k = 0
    for lineno, tokens in body:
        if len(tokens) != 3:
            raise ParseError(f"expected 'row col value', got {len(tokens)} fields", path=path, line=lineno)
        i, j = _ints(tokens[:2], 2, path, lineno)
        if not (1 <= i <= m and 1 <= j <= n):
            raise ParseError(f"index ({i}, {j}) outside {m}x{n}", path=path, line=lineno)
        if k >= nnz:
            raise ParseError(f"more than the declared {nnz} entries", path=path, line=lineno)
        v = _real(tokens[2], path, lineno)
        M[i - 1, j - 1] += v
        if i != j and sym != "general":
            M[j - 1, i - 1] += sign * v
        k += 1
    if k != nnz:
        raise ParseError(f"declared {nnz} entries, found {k}", path=path, line=len(lines))
    return M


def read_vector(path) -> np.ndarray:
    M = read_matrix(path)
    if min(M.shape) != 1:
        raise ParseError(f"expected a vector, got a {M.shape[0]}x{M.shape[1]} matrix", path=str(path))
    return M.reshape(-1)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def _rows(records):
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    first = records[0]
    if isinstance(first, PathRecord):
        cols = PATH_COLUMNS
    elif isinstance(first, SweepRow):
        cols = SWEEP_COLUMNS
    elif isinstance(first, ImageDemoRow):
        cols = IMAGE_COLUMNS
    else:
        raise TypeError(f"cannot serialise records of type {type(first).__name__}")
    return cols, [[_cell(getattr(r, c)) for c in cols] for r in records]


def write_records(records: Sequence, path):
    """CSV with a header row for path records, sweep rows or image-demo rows."""
    cols, rows = _rows(records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    w.writerows(rows)
    try:
        atomic_write_text(path, buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_trace(rows, path):
    """CSV of per-iteration records (TraceRecord objects or dicts); missing fields stay empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in rows:
        get = r.get if isinstance(r, dict) else (lambda c, r=r: getattr(r, c, None))
        w.writerow([_cell(get(c)) for c in TRACE_COLUMNS])
    atomic_write_text(path, buf.getvalue())


_INT_COLUMNS = {"iterations", "nnz", "iteration", "nonzeros", "trial"}
_STR_COLUMNS = {"solver", "method", "flagged"}


def read_records(path) -> list:
    """Parse a CSV written by :func:`write_records` into dictionaries.

    Empty cells become None; numeric columns are converted back exactly.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            rec = {}
            for k, v in row.items():
                if v == "":
                    rec[k] = None
                elif k in _INT_COLUMNS:
                    rec[k] = int(v)
                elif k in _STR_COLUMNS:
                    rec[k] = v
                else:
                    rec[k] = float(v)
            out.append(rec)
    return out
