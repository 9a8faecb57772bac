"""Plain-text graph, feature and label files.

* edge list: one edge per line, two whitespace-separated 0-based ids;
  lines starting with ``#`` and blank lines are ignored
* features: CSV without header, N rows of D comma-separated floats
* labels: one integer per line
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph


def read_edge_list(path, num_nodes: int | None = None) -> Graph:
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two node ids, got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
    if num_nodes is None:
        num_nodes = 1 + max((max(e) for e in edges), default=-1)
    return build_graph(edges, num_nodes)


def write_edge_list(path, g: Graph) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {g.num_nodes} nodes, {g.num_edges} edges\n")
        for i, j in g.edge_list():
            fh.write(f"{i} {j}\n")


def read_features(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    x = np.array(rows, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{path}: rows have inconsistent lengths")
    if not np.isfinite(x).all():
        raise ValueError(f"{path}: non-finite feature values")
    return x


def write_matrix_csv(path, x: np.ndarray, header: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in np.atleast_2d(x):
            w.writerow([repr(float(v)) for v in row])


def read_labels(path) -> np.ndarray:
    text = Path(path).read_text().split()
    return np.array([int(t) for t in text], dtype=np.int64)


def write_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def write_rows_csv(path, rows: list[dict], header: list[str]) -> None:
    """Write dict rows under a fixed header; missing keys become empty cells."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, extrasaction="raise")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in header})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v
