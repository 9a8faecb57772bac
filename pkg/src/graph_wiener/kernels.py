"""Scalar spectral filters on the normalized-Laplacian spectrum [0, 2].

All filter functions accept a float or an ndarray of eigenvalues and
broadcast like numpy ufuncs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import SparseOperator, spmm
from .linalg import EigenDecomposition

KERNELS = ("gcn", "heat", "ppr")
DEFAULT_CLAMP = 1e-3


@dataclass(frozen=True)
class KernelSpec:
    """Convolution kernel family with its parameters.

    gcn: ``1 - lam``; heat: ``exp(-t lam)``;
    ppr: ``alpha / (1 - (1 - alpha)(1 - lam))``.
    """

    kind: str = "heat"
    t: float = 1.0
    alpha: float = 0.2

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNELS}")
        if not self.t > 0:
            raise ValueError(f"diffusion time must be positive, got {self.t}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"teleport probability must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class WienerSpec:
    """Averaged Wiener filter ``g / (g**2 + sigma2 / (gamma * avg_energy))``."""

    kernel: KernelSpec = field(default_factory=KernelSpec)
    sigma2: float = 0.0
    avg_energy: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if not self.avg_energy > 0:
            raise ValueError("avg_energy must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def aer(self) -> float:
        """Augmentation-to-energy ratio after the gamma scaling."""
        return self.sigma2 / (self.gamma * self.avg_energy)


def eval_conv(k: KernelSpec, lam):
    lam = np.asarray(lam, dtype=np.float64)
    if k.kind == "gcn":
        out = 1.0 - lam
    elif k.kind == "heat":
        out = np.exp(-k.t * lam)
    else:
        denom = k.alpha + (1.0 - k.alpha) * lam  # = 1 - (1 - alpha)(1 - lam), exact at lam = 0
        assert np.all(np.abs(denom) >= 1e-12), "ppr denominator vanished"
        out = k.alpha / denom
    return out if out.ndim else float(out)


def eval_inverse(k: KernelSpec, lam, clamp: float = DEFAULT_CLAMP):
    """Inverse filter ``1 / g_c``.

    Only the gcn kernel can vanish on [0, 2]; its magnitude is floored at
    ``clamp`` (sign kept, zero treated as positive) before inverting.
    heat and ppr use their closed forms.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if k.kind == "gcn":
        g = 1.0 - lam
        sign = np.where(g < 0, -1.0, 1.0)
        out = sign / np.maximum(np.abs(g), clamp)
    elif k.kind == "heat":
        out = np.exp(k.t * lam)
    else:
        out = (k.alpha + (1.0 - k.alpha) * lam) / k.alpha
    return out if out.ndim else float(out)


def wiener_gain(g_c, aer):
    """``g_c / (g_c**2 + aer)``, defined as 0 where both terms vanish."""
    g_c = np.asarray(g_c, dtype=np.float64)
    aer = np.asarray(aer, dtype=np.float64)
    denom = g_c * g_c + aer
    out = np.zeros(np.broadcast(g_c, aer).shape)
    np.divide(g_c, denom, out=out, where=denom > 0)
    return out if out.ndim else float(out)


def eval_wiener(w: WienerSpec, lam):
    return wiener_gain(eval_conv(w.kernel, lam), w.aer)


def eval_wiener_exact(k: KernelSpec, lam, energies, sigma2: float):
    """Per-spectrum Wiener filter with caller-supplied energies ``E[x*_i^2]``."""
    energies = np.asarray(energies, dtype=np.float64)
    aer = np.full(energies.shape, np.inf)
    np.divide(sigma2, energies, out=aer, where=energies > 0)
    if sigma2 == 0:
        aer = np.zeros(energies.shape)
    return wiener_gain(eval_conv(k, lam), aer)


def estimate_avg_energy(h: np.ndarray) -> float:
    """Mean second moment plus variance per entry, from Frobenius norms."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if h.size == 0:
        raise ValueError("empty feature matrix")
    centred = h - h.mean(axis=0, keepdims=True)
    return float((np.sum(h * h) + np.sum(centred * centred)) / h.size)


def estimate_sigma2(h: np.ndarray, rw: SparseOperator) -> float:
    """Mean squared deviation of each row from its neighbourhood average."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    if rw.shape[1] != h.shape[0]:
        raise ValueError(f"operator is {rw.shape}, features have {h.shape[0]} rows")
    r = h - spmm(rw, h)
    return float(np.sum(r * r) / h.size)


def spectral_apply_exact(
    ed: EigenDecomposition, f: Callable[[np.ndarray], np.ndarray], x: np.ndarray
) -> np.ndarray:
    """``U diag(f(lambda)) U^T x`` with an explicit eigendecomposition."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != ed.n:
        raise ValueError(f"decomposition has size {ed.n} but x has {x.shape[0]} rows")
    return ed.apply(f, x)
