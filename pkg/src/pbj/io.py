"""Matrix files and report tables.

Delimited files carry a header row of column labels followed by numeric
rows. The binary layout is a 16-byte little-endian header
(``magic[4], version u32, rows u32, cols u32``) followed by row-major
float64 values.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

BINARY_VERSION = 1
BINARY_MAGICS = (b"PBJN", b"PERM", b"PBJM")
_HEADER = struct.Struct("<4sIII")
_U32_MAX = 2**32 - 1


def _format_from_path(path):
    suffix = Path(path).suffix.lower()
    return {".csv": "csv", ".tsv": "tsv", ".txt": "tsv", ".bin": "binary"}.get(suffix, "csv")


def write_binary(path, matrix, magic=b"PBJM"):
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise ParseError("binary matrices must be two-dimensional")
    rows, cols = matrix.shape
    if rows > _U32_MAX or cols > _U32_MAX:
        raise ParseError("matrix dimensions overflow the u32 header")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, BINARY_VERSION, rows, cols))
        fh.write(matrix.tobytes(order="C"))


def read_binary(path):
    """Read a binary matrix; returns ``(matrix, magic)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: truncated binary header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic not in BINARY_MAGICS:
        raise ParseError(f"{path}: unknown magic {magic!r}")
    if version != BINARY_VERSION:
        raise ParseError(f"{path}: unsupported binary version {version}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for {rows}x{cols}, found {len(data)}")
    matrix = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    return matrix.astype(float), magic


def _read_delimited(path, delimiter):
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file", row=1) from None
        labels = [h.strip() for h in header]
        if not labels or any(lab == "" for lab in labels):
            raise ParseError(f"{path}: header row has empty labels", row=1)
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(labels):
                raise ParseError(
                    f"{path}: ragged row with {len(record)} fields, expected {len(labels)}",
                    row=lineno)
            values = []
            for col, cell in enumerate(record, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: non-numeric cell {cell!r}",
                                     row=lineno, column=col) from None
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows", row=2)
    return np.array(rows, dtype=float), labels


def load_matrix(path, fmt=None):
    """Load a numeric matrix and its column labels.

    Parameters
    ----------
    path : str or Path
    fmt : {"csv", "tsv", "binary"}, optional
        Inferred from the file suffix when omitted.

    Returns
    -------
    matrix : ndarray
    labels : list of str
        Header labels; binary files get ``c0, c1, ...``.
    """
    fmt = fmt or _format_from_path(path)
    if fmt == "binary":
        matrix, _ = read_binary(path)
        return matrix, [f"c{j}" for j in range(matrix.shape[1])]
    if fmt not in ("csv", "tsv"):
        raise ParseError(f"unknown matrix format {fmt!r}")
    return _read_delimited(path, "," if fmt == "csv" else "\t")


def save_matrix(path, matrix, labels, fmt=None):
    fmt = fmt or _format_from_path(path)
    if fmt == "binary":
        write_binary(path, matrix)
        return
    delimiter = "," if fmt == "csv" else "\t"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(labels)
        for row in np.asarray(matrix):
            w.writerow([repr(float(x)) for x in row])


def fmt_p(x):
    """Six significant digits, as used for every float in reports."""
    return f"{x:.6g}"


def write_csv(path, columns, rows, comments=()):
    """Write rows (sequences of pre-formatted strings) with optional ``#`` comments."""
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def aligned_text(columns, rows, comments=()):
    """Render rows as a whitespace-aligned text table."""
    widths = [len(c) for c in columns]
    for row in rows:
        widths = [max(w, len(str(v))) for w, v in zip(widths, row)]
    lines = [f"# {c}" for c in comments]
    lines.append("  ".join(c.rjust(w) for c, w in zip(columns, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(str(v).rjust(w) for v, w in zip(row, widths)))
    return "\n".join(lines) + "\n"
