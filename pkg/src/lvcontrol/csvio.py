"""Versioned CSV emission and parsing.

Every file starts with a version comment so downstream readers can detect
schema drift.  Floats are written with repr, which round-trips exactly and
is byte-stable across runs, keeping outputs reproducible.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

VERSION_LINE = "# lvctl-csv v1"


def write_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    columns = [np.atleast_1d(np.asarray(c)) for c in columns]
    if len(header) != len(columns):
        raise ValueError("header and column counts differ")
    lengths = {c.shape[0] for c in columns}
    if len(lengths) != 1:
        raise ValueError(f"column lengths differ: {sorted(lengths)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(VERSION_LINE + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([repr(float(x)) for x in row])


def read_csv(path) -> tuple[list[str], dict[str, np.ndarray]]:
    """Parse a file written by :func:`write_csv`; rejects other versions."""
    with open(path, newline="") as fh:
        version = fh.readline().rstrip("\n")
        if version != VERSION_LINE:
            raise ValueError(f"unsupported csv version line: {version!r}")
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.asarray(rows) if rows else np.empty((0, len(header)))
    return header, {name: data[:, i] for i, name in enumerate(header)}
