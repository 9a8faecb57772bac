"""Dense linear algebra and deterministic randomness.

Everything here works on float64 numpy arrays. The eigensolver and the
linear solver are written out by hand (cyclic Jacobi, Gaussian elimination
with partial pivoting) so the exact spectral path has no LAPACK dependency
beyond plain array arithmetic.

Random numbers come from :class:`SeededRng`, a counter-based SplitMix64
generator::

    state_k = seed + (k + 1) * 0x9E3779B97F4A7C15        (mod 2**64)
    z = state_k
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9              (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB              (mod 2**64)
    out_k = z ^ (z >> 31)

Uniform doubles are ``(out_k >> 11) * 2**-53`` in [0, 1). Because the k-th
output depends only on (seed, k) the stream can be drawn in vectorized
blocks and is identical on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class ConvergenceError(RuntimeError):
    """Raised when the Jacobi iteration exhausts its sweep budget."""


class SingularMatrixError(ValueError):
    """Raised when elimination meets a pivot below the singular threshold."""


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def derive_seed(seed: int, tag: str) -> int:
    """Child seed for a named purpose: ``mix64(seed xor fnv1a64(tag))``."""
    z = np.array([(int(seed) ^ _fnv1a64(tag)) & _MASK64], dtype=np.uint64)
    return int(_mix64(z)[0])


class SeededRng:
    """Counter-based SplitMix64 stream (see module docstring for the rule)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def child(self, tag: str) -> "SeededRng":
        return SeededRng(derive_seed(self.seed, tag))

    def next_u64(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        k = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + k * _GOLDEN
            return _mix64(state)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1) with 53 random bits each."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def permutation(self, n: int) -> np.ndarray:
        # stable argsort of uniform keys; ties are measure-zero
        return np.argsort(self.uniform(n), kind="stable")


def gaussian_sample(rng: SeededRng, n: int) -> np.ndarray:
    """Standard normal draws via Box-Muller, consuming two uniforms per pair."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return np.zeros(0)
    pairs = (n + 1) // 2
    u = rng.uniform(2 * pairs)
    u1 = 1.0 - u[0::2]  # (0, 1] keeps log finite
    u2 = u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


def gaussian_matrix(rng: SeededRng, rows: int, cols: int) -> np.ndarray:
    return gaussian_sample(rng, rows * cols).reshape(rows, cols)


def glorot_init(rng: SeededRng, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform Glorot weights on ``[-s, s]`` with ``s = sqrt(6 / (fan_in + fan_out))``."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fan_in and fan_out must be positive")
    s = np.sqrt(6.0 / (fan_in + fan_out))
    u = rng.uniform(fan_in * fan_out).reshape(fan_in, fan_out)
    return (2.0 * u - 1.0) * s


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def apply(self, f: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
        """``U diag(f(lambda)) U^T x``."""
        u = self.eigenvectors
        gains = np.asarray(f(self.eigenvalues), dtype=np.float64)
        if gains.shape == ():
            gains = np.full(self.n, float(gains))
        spec = u.T @ x
        if spec.ndim == 1:
            return u @ (gains * spec)
        return u @ (gains[:, None] * spec)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings of a circle-method tournament; every pair (p, q) appears once.

    Each round is a set of disjoint index pairs, so the rotations of one
    round commute and can be applied together.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _max_offdiag(a: np.ndarray) -> float:
    if a.shape[0] < 2:
        return 0.0
    off = np.abs(a - np.diag(np.diag(a)))
    return float(off.max())


def eigh_symmetric(m: np.ndarray, tol: float = 1e-11, max_sweeps: int = 64) -> EigenDecomposition:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    A sweep visits every off-diagonal pair exactly once in round-robin order;
    the pairs of one round are disjoint and rotated simultaneously. Iteration
    stops once the largest off-diagonal magnitude is at most
    ``tol * max(1, max|m|)``.

    Parameters
    ----------
    m : (N, N) array
        Symmetric to 1e-10 (absolute, scaled by ``max|m|``).
    tol : float
        Off-diagonal stopping threshold.
    max_sweeps : int
        Sweep budget; exceeding it raises :class:`ConvergenceError`.
    """
    a = np.array(m, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = max(1.0, float(np.abs(a).max())) if n else 1.0
    if n and float(np.abs(a - a.T).max()) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    threshold = tol * scale
    rounds = _round_robin(n) if n > 1 else []

    sweeps = 0
    while _max_offdiag(a) > threshold:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps; "
                f"max off-diagonal {_max_offdiag(a):.3e} > {threshold:.3e}"
            )
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # A <- J^T A J, rows then columns
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
        sweeps += 1

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(eigenvalues=w[order], eigenvectors=v[:, order])


def solve_linear(a: np.ndarray, b: np.ndarray, pivot_tol: float = 1e-13) -> np.ndarray:
    """Solve ``a x = b`` by Gaussian elimination with partial pivoting.

    A pivot whose magnitude falls below ``pivot_tol * max(1, max|a|)``
    raises :class:`SingularMatrixError`.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    b = np.array(b, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, matrix has {n}")
    floor = pivot_tol * max(1.0, float(np.abs(a).max()) if n else 1.0)

    for k in range(n):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[piv, k]) < floor:
            raise SingularMatrixError(f"pivot {a[piv, k]:.3e} in column {k} below {floor:.1e}")
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            b[[k, piv]] = b[[piv, k]]
        factors = a[k + 1 :, k] / a[k, k]
        a[k + 1 :, k:] -= np.outer(factors, a[k, k:])
        b[k + 1 :] -= factors[:, None] * b[k] if b.ndim == 2 else factors * b[k]

    x = np.zeros_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1 :] @ x[k + 1 :]) / a[k, k]
    return x
