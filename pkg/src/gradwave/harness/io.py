"""Snapshot files, diagnostics CSV and the JSON run summary.

Snapshot layout (all little-endian, no padding)::

    offset  size          content
    0       4             magic b"WPL1"
    4       8             int64   d
    12      8             int64   n
    20      8             float64 L
    28      8             float64 t
    36      8             float64 lambda
    44      8             float64 mu
    52      8             float64 alpha
    60      8             float64 beta
    68      8             float64 sigma
    76      4 * 8 * n**d  float64 u, u_t, v, v_t, each row-major (C order)

Values round-trip bitwise.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..core import CouplingParams, Grid, State
from ..diagnostics import CSV_COLUMNS

MAGIC = b"WPL1"
HEADER = struct.Struct("<4sqq7d")
SUMMARY_KEYS = (
    "verdict", "t_final", "steps", "E0", "E_final", "drift_rel_final", "drift_rel_max",
    "blowup", "scatter", "cone", "config", "resumed_from", "csv", "snapshot", "csv_columns",
)


class SnapshotError(ValueError):
    pass


def snapshot_nbytes(d: int, n: int) -> int:
    return HEADER.size + 4 * 8 * n**d


def write_snapshot(path, s: State, p: CouplingParams) -> Path:
    path = Path(path)
    g = s.grid
    head = HEADER.pack(MAGIC, g.d, g.n, g.L, s.t, p.lam, p.mu, p.alpha, p.beta, float(p.sigma))
    with open(path, "wb") as fh:
        fh.write(head)
        for f in s.fields():
            fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())
    return path


def read_snapshot(path) -> tuple[State, CouplingParams]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise SnapshotError(
            f"{path}: truncated header, expected at least {HEADER.size} bytes, got {len(data)}"
        )
    magic, d, n, L, t, lam, mu, alpha, beta, sigma = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}, expected {MAGIC!r} (unknown format or version)")
    if d not in (2, 3, 4) or n < 1:
        raise SnapshotError(f"{path}: implausible header d={d}, n={n}")
    expected = snapshot_nbytes(d, n)
    if len(data) != expected:
        raise SnapshotError(
            f"{path}: size mismatch for d={d}, n={n}: expected {expected} bytes, got {len(data)}"
        )
    grid = Grid(d, n, L, pow2=not _needs_relaxed(n))
    arrs = np.frombuffer(data, dtype="<f8", offset=HEADER.size).reshape(4, *grid.shape)
    fields = [np.array(a, dtype=np.float64) for a in arrs]
    s = State(grid, *fields, t=t)
    return s, CouplingParams(lam, mu, alpha, beta, int(sigma))


def _needs_relaxed(n: int) -> bool:
    return n < 8 or n & (n - 1) != 0


def format_cell(value) -> str:
    """CSV cell: empty for absent values, ``repr`` (round-trip exact) for floats."""
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


class CsvWriter:
    """Streams diagnostics rows with the fixed column set."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(CSV_COLUMNS)
        self.rows = 0

    def write(self, row: dict) -> None:
        self._w.writerow([format_cell(row.get(c)) for c in CSV_COLUMNS])
        self.rows += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path) -> list[dict]:
    """Rows as dicts of floats (``None`` for empty cells)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: header {reader.fieldnames} does not match {list(CSV_COLUMNS)}")
        return [{k: (float(v) if v != "" else None) for k, v in row.items()} for row in reader]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_summary(path, summary: dict) -> Path:
    missing = [k for k in SUMMARY_KEYS if k not in summary]
    if missing:
        raise ValueError(f"summary is missing keys {missing}")
    path = Path(path)
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return path


def validate_summary(summary: dict) -> list[str]:
    """Problems with a summary dict against the documented key list."""
    probs = [f"missing key {k!r}" for k in SUMMARY_KEYS if k not in summary]
    if summary.get("verdict") not in ("global", "blowup"):
        probs.append(f"verdict must be 'global' or 'blowup', got {summary.get('verdict')!r}")
    return probs


def write_scattering_state(path, sc, p: CouplingParams) -> Path:
    """A scattering state in the snapshot format, ``t`` holding the extraction horizon."""
    s = State(sc.grid, sc.u1, sc.u2, sc.v1, sc.v2, t=sc.horizon)
    return write_snapshot(path, s, p)
