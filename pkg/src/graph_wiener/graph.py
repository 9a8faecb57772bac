"""Undirected graphs in compressed-row form and the sparse operators built on them."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph; every edge is stored in both rows.

    Rows are sorted ascending, there are no self-loops and no duplicates.
    The degree of node ``i`` is the length of row ``i``.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @property
    def num_edges(self) -> int:
        return len(self.col_indices) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i] : self.row_offsets[i + 1]]

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an ``(|E|, 2)`` array with ``i < j``."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = rows < self.col_indices
        return np.stack([rows[keep], self.col_indices[keep]], axis=1)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.col_indices))
        n = self.num_nodes
        return sp.csr_matrix((data, self.col_indices, self.row_offsets), shape=(n, n))


def build_graph(edges, num_nodes: int) -> Graph:
    """Deduplicate, symmetrize and sort an edge list; self-loops are dropped.

    Raises ``ValueError`` when an id lies outside ``[0, num_nodes)``.
    """
    n = int(num_nodes)
    if n < 0:
        raise ValueError("num_nodes must be non-negative")
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        bad = e[(e < 0).any(axis=1) | (e >= n).any(axis=1)][0]
        raise ValueError(f"edge {tuple(int(v) for v in bad)} has an id outside [0, {n})")
    e = e[e[:, 0] != e[:, 1]]
    both = np.concatenate([e, e[:, ::-1]])
    keys = np.unique(both[:, 0] * n + both[:, 1]) if len(both) else np.zeros(0, dtype=np.int64)
    rows, cols = np.divmod(keys, n) if n else (keys, keys)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return Graph(num_nodes=n, row_offsets=offsets, col_indices=cols.astype(np.int64))


class SparseOperator:
    """Immutable N x N float64 operator in compressed-row form."""

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix, dtype=np.float64)
        m.sort_indices()
        self._m = m

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._m

    @property
    def shape(self) -> tuple[int, int]:
        return self._m.shape

    @property
    def row_offsets(self) -> np.ndarray:
        return self._m.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self._m.indices

    @property
    def values(self) -> np.ndarray:
        return self._m.data

    @property
    def nnz(self) -> int:
        return self._m.nnz

    def to_dense(self) -> np.ndarray:
        return self._m.toarray()

    @classmethod
    def identity(cls, n: int) -> "SparseOperator":
        return cls(sp.identity(n, format="csr"))

    def __repr__(self) -> str:
        return f"SparseOperator(shape={self.shape}, nnz={self.nnz})"


def _inv_sqrt_degrees(g: Graph) -> np.ndarray:
    d = g.degrees.astype(np.float64)
    out = np.zeros_like(d)
    np.divide(1.0, np.sqrt(d), out=out, where=d > 0)
    return out


def normalized_laplacian(g: Graph) -> SparseOperator:
    """``L = I - D^{-1/2} A D^{-1/2}``.

    Isolated nodes get an all-zero row and column (eigenvalue 0), so every
    filter acts on them as ``g(0)`` times the identity.
    """
    r = _inv_sqrt_degrees(g)
    norm_adj = sp.diags(r) @ g.adjacency @ sp.diags(r)
    diag = (g.degrees > 0).astype(np.float64)
    return SparseOperator(sp.diags(diag) - norm_adj)


def random_walk_matrix(g: Graph) -> SparseOperator:
    """``D^{-1} A``; rows of isolated nodes are zero."""
    d = g.degrees.astype(np.float64)
    inv = np.zeros_like(d)
    np.divide(1.0, d, out=inv, where=d > 0)
    return SparseOperator(sp.diags(inv) @ g.adjacency)


def spmm(op: SparseOperator, x: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``op @ x`` for a vector or an (N, cols) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != op.shape[1]:
        raise ValueError(f"operator has {op.shape[1]} columns but x has {x.shape[0]} rows")
    return np.asarray(op.matrix @ x)
