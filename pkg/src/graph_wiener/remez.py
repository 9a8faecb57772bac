"""One-shot Remez polynomial fits of spectral filters and their action in L.

A degree-K fit places K+2 Chebyshev nodes ``t_0 < ... < t_{K+1}`` on
``[a, b]`` and solves the square system

    f(t_j) = sum_k c_k t_j**k + (-1)**j e,     j = 0..K+1

for the monomial coefficients ``c`` and the leveled error ``e``. There are
no exchange iterations. The fitted polynomial is then applied to features
as ``sum_k c_k L**k x`` with K sparse products and no eigendecomposition.

Monomial coefficients of filters with sharp features (the gcn Wiener
filter at K=16 reaches |c_k| ~ 1e5) make the Vandermonde system
ill-conditioned and cancel badly under Horner's rule. The fit therefore
solves the same system with ``T_k`` of the mapped nodes in place of
``t**k``, evaluates in that basis, and reports the monomial ``c`` derived
from it. The matrix action runs Clenshaw's recurrence on the Chebyshev
coefficients, which also costs K sparse products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial
from numpy.polynomial import chebyshev as cheb

from .graph import SparseOperator, spmm
from .linalg import solve_linear

MAX_DEGREE = 16
SPECTRUM = (0.0, 2.0)


@dataclass(frozen=True)
class RemezPolynomial:
    coeffs: np.ndarray
    leveled_error: float
    domain: tuple[float, float] = SPECTRUM
    # Chebyshev coefficients when the fit produced them; evaluation prefers them
    chebyshev: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, t):
        return poly_eval(self, t)

    @cached_property
    def chebyshev_coeffs(self) -> np.ndarray:
        """Coefficients of the same polynomial in ``T_k(s)``, ``s`` the domain mapped to [-1, 1]."""
        if self.chebyshev is not None:
            return self.chebyshev
        a, b = self.domain
        t_of_s = Polynomial([0.5 * (a + b), 0.5 * (b - a)])
        in_s = Polynomial(self.coeffs)(t_of_s)
        return in_s.convert(kind=Chebyshev).coef


def chebyshev_nodes(n: int, a: float = -1.0, b: float = 1.0) -> np.ndarray:
    """First-kind Chebyshev nodes mapped to ``[a, b]``, sorted ascending."""
    if n < 1:
        raise ValueError("need at least one node")
    if not a < b:
        raise ValueError(f"empty interval [{a}, {b}]")
    j = np.arange(n)
    t = 0.5 * (a + b) + 0.5 * (b - a) * np.cos((2 * j + 1) * np.pi / (2 * n))
    return np.sort(t)


def remez_fit(
    f: Callable[[np.ndarray], np.ndarray],
    degree: int,
    a: float = SPECTRUM[0],
    b: float = SPECTRUM[1],
) -> RemezPolynomial:
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if degree > MAX_DEGREE:
        raise ValueError(f"degree {degree} exceeds the cap of {MAX_DEGREE}")
    nodes = chebyshev_nodes(degree + 2, a, b)
    target = np.asarray(f(nodes), dtype=np.float64) * np.ones_like(nodes)
    if not np.isfinite(target).all():
        raise ValueError("filter is not finite at the fit nodes")
    system = np.empty((degree + 2, degree + 2))
    system[:, : degree + 1] = cheb.chebvander(_to_unit(nodes, a, b), degree)
    system[:, -1] = (-1.0) ** np.arange(degree + 2)
    sol = solve_linear(system, target)
    ch = sol[:-1].copy()
    mono = np.zeros(degree + 1)
    conv = Chebyshev(ch, domain=[a, b]).convert(kind=Polynomial, domain=[-1, 1], window=[-1, 1]).coef
    mono[: len(conv)] = conv
    return RemezPolynomial(coeffs=mono, leveled_error=float(sol[-1]) + 0.0, domain=(a, b), chebyshev=ch)


def _to_unit(t, a: float, b: float):
    return (t - 0.5 * (a + b)) / (0.5 * (b - a))


def poly_eval(p: RemezPolynomial, t):
    """Evaluate elementwise: Clenshaw for fitted polynomials, Horner otherwise."""
    t = np.asarray(t, dtype=np.float64)
    if p.chebyshev is not None:
        out = cheb.chebval(_to_unit(t, *p.domain), p.chebyshev)
        return out if np.ndim(out) else float(out)
    acc = np.zeros_like(t)
    for c in p.coeffs[::-1]:
        acc = acc * t + c
    return acc if acc.ndim else float(acc)


def apply_matrix_polynomial(
    l: SparseOperator, p: RemezPolynomial, x: np.ndarray, method: str = "clenshaw"
) -> np.ndarray:
    """``sum_k c_k L**k x`` with K sparse products, O(K |E| cols).

    ``method="clenshaw"`` (default) evaluates in the Chebyshev basis of the
    fit domain; ``method="horner"`` nests the monomial coefficients directly
    and is also used for degree <= 1, where nothing can cancel.
    Both compute the same polynomial and never form a power of L.
    """
    x = np.asarray(x, dtype=np.float64)
    if l.shape[0] != l.shape[1]:
        raise ValueError(f"operator must be square, got {l.shape}")
    if x.shape[0] != l.shape[1]:
        raise ValueError(f"operator has {l.shape[1]} columns but x has {x.shape[0]} rows")
    if method == "horner" or p.degree <= 1:
        c = p.coeffs
        acc = c[-1] * x
        for ck in c[-2::-1]:
            acc = spmm(l, acc)
            acc += ck * x
        return acc
    if method != "clenshaw":
        raise ValueError(f"unknown method {method!r}")

    a, b = p.domain
    mid, half = 0.5 * (a + b), 0.5 * (b - a)

    def shifted(v):  # s(L) v with s = (L - mid) / half
        return (spmm(l, v) - mid * v) / half

    ch = p.chebyshev_coeffs
    b1 = ch[-1] * x
    b2 = np.zeros_like(x)
    for ck in ch[-2:0:-1]:
        b1, b2 = ck * x + 2.0 * shifted(b1) - b2, b1
    return ch[0] * x + shifted(b1) - b2


def grid_error(f: Callable[[np.ndarray], np.ndarray], p: RemezPolynomial, points: int = 1001) -> float:
    """Largest ``|f - p|`` over a uniform grid on the fit domain."""
    t = np.linspace(p.domain[0], p.domain[1], points)
    return float(np.max(np.abs(np.asarray(f(t)) - poly_eval(p, t))))
