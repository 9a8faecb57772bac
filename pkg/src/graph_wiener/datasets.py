"""Small built-in graphs: Zachary's karate club and stochastic block models."""

from __future__ import annotations

import numpy as np

from .graph import Graph, build_graph
from .linalg import SeededRng, derive_seed, gaussian_matrix

# Zachary (1977), 34 members, 78 friendships; 0-based ids.
_KARATE_EDGES = (
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10),
    (0, 11), (0, 12), (0, 13), (0, 17), (0, 19), (0, 21), (0, 31), (1, 2),
    (1, 3), (1, 7), (1, 13), (1, 17), (1, 19), (1, 21), (1, 30), (2, 3),
    (2, 7), (2, 8), (2, 9), (2, 13), (2, 27), (2, 28), (2, 32), (3, 7),
    (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10), (5, 16), (6, 16),
    (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33),
    (15, 32), (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33),
    (22, 32), (22, 33), (23, 25), (23, 27), (23, 29), (23, 32), (23, 33),
    (24, 25), (24, 27), (24, 31), (25, 31), (26, 29), (26, 33), (27, 33),
    (28, 31), (28, 33), (29, 32), (29, 33), (30, 32), (30, 33), (31, 32),
    (31, 33), (32, 33),
)

# faction after the split: 0 = instructor's club, 1 = administrator's club
_KARATE_LABELS = (
    0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0,
    0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
)


def karate_graph() -> tuple[Graph, np.ndarray]:
    return build_graph(_KARATE_EDGES, 34), np.array(_KARATE_LABELS, dtype=np.int64)


def generate_sbm(block_sizes, p_in: float, p_out: float, seed: int) -> tuple[Graph, np.ndarray]:
    """Stochastic block model with uniform intra/inter-block edge probabilities.

    Every unordered pair ``i < j`` is kept independently with probability
    ``p_in`` (same block) or ``p_out``. Pairs are visited row by row, so the
    graph is a pure function of the arguments.
    """
    sizes = [int(s) for s in block_sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError(f"block sizes must be positive, got {sizes}")
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name}={p} is not a probability")
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    rng = SeededRng(derive_seed(seed, "sbm"))
    chunks = []
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        prob = np.where(labels[j] == labels[i], p_in, p_out)
        keep = rng.uniform(len(j)) < prob
        if keep.any():
            chunks.append(np.stack([np.full(keep.sum(), i), j[keep]], axis=1))
    edges = np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)
    return build_graph(edges, n), labels


def community_features(labels, dim: int, signal: float, seed: int) -> np.ndarray:
    """Gaussian node features whose class means sit ``signal`` apart on average.

    Each class gets a random mean direction of norm ``signal``; every node
    adds unit-variance isotropic noise. Small ``signal`` makes the raw
    features only weakly informative, leaving room for graph propagation.
    """
    labels = np.asarray(labels)
    classes = int(labels.max()) + 1
    rng = SeededRng(derive_seed(seed, "features"))
    means = gaussian_matrix(rng, classes, dim)
    means *= signal / np.linalg.norm(means, axis=1, keepdims=True)
    return means[labels] + gaussian_matrix(rng, len(labels), dim)


def gaussian_features(num_nodes: int, dim: int, seed: int) -> np.ndarray:
    """Standard-normal node features for graphs that come without any."""
    if num_nodes < 1 or dim < 1:
        raise ValueError("need at least one node and one feature")
    return gaussian_matrix(SeededRng(derive_seed(seed, "features")), num_nodes, dim)
