"""Linear probe: softmax regression on frozen embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SeededRng, derive_seed, glorot_init


@dataclass
class ProbeResult:
    accuracy: float
    val_accuracy: float
    best_epoch: int
    class_counts: dict  # class -> (test size, correct)
    seed: int
    fractions: tuple[float, float, float]


def split_indices(n: int, fractions=(0.1, 0.1, 0.8), seed: int = 0):
    """Random train/val/test index split; the test set takes the remainder."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or sum(fractions) > 1 + 1e-9:
        raise ValueError(f"bad split fractions {fractions}")
    perm = SeededRng(derive_seed(seed, "split")).permutation(n)
    n_train = max(1, int(round(fractions[0] * n)))
    n_val = max(1, int(round(fractions[1] * n)))
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def logistic_probe(
    embeddings,
    labels,
    fractions=(0.1, 0.1, 0.8),
    seed: int = 0,
    epochs: int = 300,
    lr: float = 0.01,
) -> ProbeResult:
    """Multinomial logistic regression trained with full-batch Adam.

    Weights start from Glorot, the bias from zero. After every epoch the
    validation accuracy is measured; the parameters of the best epoch
    (latest on ties, the most trained) are scored on the test split.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != len(y):
        raise ValueError(f"embeddings {x.shape} do not match {len(y)} labels")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("the probe needs at least two classes")
    if not np.isfinite(x).all():
        raise ValueError("embeddings contain non-finite values")
    k = int(y.max()) + 1
    train_idx, val_idx, test_idx = split_indices(len(y), fractions, seed)

    rng = SeededRng(derive_seed(seed, "probe-init"))
    w = glorot_init(rng, x.shape[1], k)
    b = np.zeros(k)
    params = [w, b]
    m = [np.zeros_like(w), np.zeros_like(b)]
    v = [np.zeros_like(w), np.zeros_like(b)]
    b1, b2, eps = 0.9, 0.999, 1e-8

    xt, yt = x[train_idx], y[train_idx]
    onehot = np.eye(k)[yt]
    best = (-1.0, 0, w.copy(), b.copy())
    for epoch in range(1, epochs + 1):
        prob = _softmax(xt @ w + b)
        d = (prob - onehot) / len(yt)
        grads = [xt.T @ d, d.sum(axis=0)]
        for i, (p, g) in enumerate(zip(params, grads)):
            m[i] = b1 * m[i] + (1 - b1) * g
            v[i] = b2 * v[i] + (1 - b2) * g * g
            p -= lr * (m[i] / (1 - b1**epoch)) / (np.sqrt(v[i] / (1 - b2**epoch)) + eps)
        val_acc = float(np.mean(np.argmax(x[val_idx] @ w + b, axis=1) == y[val_idx]))
        if val_acc >= best[0]:
            best = (val_acc, epoch, w.copy(), b.copy())

    val_acc, best_epoch, bw, bb = best
    pred = np.argmax(x[test_idx] @ bw + bb, axis=1)
    correct = pred == y[test_idx]
    counts = {int(c): (int(np.sum(y[test_idx] == c)), int(np.sum(correct & (y[test_idx] == c)))) for c in classes}
    return ProbeResult(
        accuracy=float(correct.mean()) if len(test_idx) else float("nan"),
        val_accuracy=val_acc,
        best_epoch=best_epoch,
        class_counts=counts,
        seed=seed,
        fractions=tuple(fractions),
    )


def probe_accuracy(embeddings, labels, trials: int = 20, fractions=(0.1, 0.1, 0.8), seed: int = 0) -> float:
    """Mean test accuracy of ``trials`` probes on independent random splits."""
    accs = [
        logistic_probe(embeddings, labels, fractions, seed=derive_seed(seed, f"trial-{t}")).accuracy
        for t in range(trials)
    ]
    return float(np.mean(accs))
