"""CSV ingestion and export.

Wide CSV (dense): the first row holds the grid points, optionally preceded
by a label cell such as ``id``; every further row is a curve id followed by
``V`` values. Long CSV (sparse): columns ``id,t,value`` with an optional
header row. Curves are returned sorted by id (numerically when every id is
a number, lexicographically otherwise).
"""

from __future__ import annotations

import csv
import hashlib
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import InputError, InvalidGridError
from .fdcore import FunctionalSample, Grid, SparseFunctionalSample

FORMATS = ("wide", "long")


def _float(cell: str, line: int, what: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise InputError(f"line {line}: {what} {cell!r} is not a number") from None
    if not np.isfinite(v):
        raise InputError(f"line {line}: {what} {cell!r} is not finite")
    return v


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _rows(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file {str(path)!r} does not exist")
    with path.open(newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells):
                continue
            yield line, cells


def sort_ids(ids) -> list:
    ids = list(ids)
    if all(_is_number(i) for i in ids):
        return sorted(ids, key=lambda i: (float(i), i))
    return sorted(ids)


def read_wide(path) -> FunctionalSample:
    rows = _rows(path)
    try:
        line, header = next(rows)
    except StopIteration:
        raise InputError(f"{path}: file is empty") from None
    if header and not _is_number(header[0]):
        header = header[1:]
    points = np.array([_float(c, line, "grid point") for c in header])
    if points.size < 2:
        raise InvalidGridError(f"line {line}: need at least 2 grid points")
    bad = np.flatnonzero(np.diff(points) <= 0)
    if bad.size:
        k = int(bad[0])
        raise InvalidGridError(
            f"line {line}: grid points must be strictly increasing "
            f"(column {k + 2} = {points[k + 1]!r} follows {points[k]!r})"
        )
    curves = {}
    for line, cells in rows:
        if len(cells) != points.size + 1:
            raise InputError(f"line {line}: expected an id and {points.size} values, got {len(cells)} cells")
        cid = cells[0]
        if cid == "":
            raise InputError(f"line {line}: empty curve id")
        if cid in curves:
            raise InputError(f"line {line}: duplicate curve id {cid!r}")
        curves[cid] = [_float(c, line, "value") for c in cells[1:]]
    if not curves:
        raise InputError(f"{path}: no curves found")
    ids = sort_ids(curves)
    return FunctionalSample(Grid(points), np.array([curves[i] for i in ids]), tuple(ids))


def read_long(path, domain: Optional[tuple] = None) -> SparseFunctionalSample:
    """Read ``id,t,value`` rows; the domain defaults to the range of all ``t``."""
    obs = defaultdict(dict)
    for line, cells in _rows(path):
        if len(cells) != 3:
            raise InputError(f"line {line}: expected 3 cells (id,t,value), got {len(cells)}")
        if line == 1 and not _is_number(cells[1]):
            continue  # header
        cid = cells[0]
        if cid == "":
            raise InputError(f"line {line}: empty curve id")
        t = _float(cells[1], line, "time")
        x = _float(cells[2], line, "value")
        if t in obs[cid]:
            raise InputError(f"line {line}: duplicate observation (id={cid!r}, t={cells[1]})")
        obs[cid][t] = x
    if not obs:
        raise InputError(f"{path}: no observations found")
    ids = sort_ids(obs)
    times = [np.array(sorted(obs[i])) for i in ids]
    values = [np.array([obs[i][t] for t in ts]) for i, ts in zip(ids, times)]
    if domain is None:
        lo = min(float(t[0]) for t in times)
        hi = max(float(t[-1]) for t in times)
        if not hi > lo:
            raise InvalidGridError("all observations share one time point; give the domain explicitly")
        domain = (lo, hi)
    return SparseFunctionalSample(domain, tuple(times), tuple(values), tuple(ids))


def ingest(path, format: str = "wide", domain: Optional[tuple] = None):
    if format == "wide":
        return read_wide(path)
    if format == "long":
        return read_long(path, domain)
    raise InputError(f"unknown format {format!r}; choose from {', '.join(FORMATS)}")


def write_wide(sample: FunctionalSample, path) -> None:
    """Write ``sample`` as wide CSV; ``repr`` floats make the round trip exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(t)) for t in sample.grid.points])
        for cid, row in zip(sample.curve_ids, sample.values):
            w.writerow([cid] + [repr(float(v)) for v in row])


def write_long(sample, path) -> None:
    if isinstance(sample, FunctionalSample):
        sample = SparseFunctionalSample.from_dense(sample)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "t", "value"])
        for cid, ts, xs in zip(sample.curve_ids, sample.times, sample.values):
            for t, x in zip(ts, xs):
                w.writerow([cid, repr(float(t)), repr(float(x))])


def read_table(path) -> tuple[list, dict]:
    """Read a headed CSV whose first column is the curve id.

    Returns ``(column_names, {id: [cells]})`` with the id column removed.
    """
    rows = _rows(path)
    try:
        line, header = next(rows)
    except StopIteration:
        raise InputError(f"{path}: file is empty") from None
    if len(header) < 2:
        raise InputError(f"line {line}: need an id column and at least one value column")
    table = {}
    for line, cells in rows:
        if len(cells) != len(header):
            raise InputError(f"line {line}: expected {len(header)} cells, got {len(cells)}")
        if cells[0] in table:
            raise InputError(f"line {line}: duplicate id {cells[0]!r}")
        table[cells[0]] = cells[1:]
    return header[1:], table


def align_table(table: dict, ids, path) -> list:
    """Rows of ``table`` in the order of ``ids``; every id must be present."""
    missing = [i for i in ids if i not in table]
    if missing:
        raise InputError(f"{path}: no row for curve id(s) {', '.join(missing[:5])}")
    return [table[i] for i in ids]


def numeric_column(rows, path, column: int = 0) -> np.ndarray:
    out = []
    for r in rows:
        try:
            out.append(float(r[column]))
        except ValueError:
            raise InputError(f"{path}: value {r[column]!r} is not a number") from None
    return np.array(out)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
