"""Spectral error analysis, Monte Carlo recovery and training sweeps.

Everything here works per spectrum: a signal ``x`` with projections
``x*_i = u_i^T x`` is convolved by ``g_c``, perturbed by i.i.d. noise of
variance ``sigma2`` and recovered with a decoding filter ``g_d``. The
expected squared error on spectrum ``i`` is

    S_i = (g_d g_c - 1)**2 E[x*_i**2] + g_d**2 sigma2

and the reconstruction MSE is the sum over spectra.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autoencoder import ModelConfig, train
from .graph import Graph, normalized_laplacian
from .io import write_rows_csv
from .kernels import DEFAULT_CLAMP, KernelSpec, eval_conv, eval_inverse, wiener_gain
from .linalg import EigenDecomposition, SeededRng, derive_seed, eigh_symmetric, gaussian_matrix
from .probe import probe_accuracy

REPORT_HEADER = ["report", "spectrum", "lam", "energy", "g_c", "filter", "gain", "S", "status"]
SWEEP_HEADER = ["beta", "decoder_mode", "seed", "initial_loss", "final_loss", "probe_accuracy"]
TIE_TOL = 1e-12


@dataclass
class SpectralReport:
    """Per-spectrum gains and errors of one or more decoding filters.

    ``filters`` and ``errors`` map a filter name to arrays aligned with
    ``lam``. ``skipped`` marks spectra excluded from the checks (an unmet
    precondition); ``checks`` holds the named pass/fail outcomes.
    """

    name: str
    lam: np.ndarray
    energy: np.ndarray
    g_c: np.ndarray
    filters: dict[str, np.ndarray]
    errors: dict[str, np.ndarray]
    checks: dict[str, bool] = field(default_factory=dict)
    skipped: np.ndarray | None = None
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def mse(self) -> dict[str, float]:
        return {k: float(np.sum(v)) for k, v in self.errors.items()}

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def rows(self) -> list[dict]:
        skipped = self.skipped if self.skipped is not None else np.zeros(len(self.lam), dtype=bool)
        out = []
        for name, gains in self.filters.items():
            for i in range(len(self.lam)):
                out.append(
                    {
                        "report": self.name,
                        "spectrum": i,
                        "lam": self.lam[i],
                        "energy": self.energy[i],
                        "g_c": self.g_c[i],
                        "filter": name,
                        "gain": gains[i],
                        "S": self.errors[name][i],
                        "status": "skipped" if skipped[i] else ("pass" if self.passed else "fail"),
                    }
                )
        return out


def spectral_error(lam, energy, sigma2, g_c_val, g_d_val):
    """``(g_d g_c - 1)**2 energy + g_d**2 sigma2``; ``lam`` only labels the spectrum."""
    energy = np.asarray(energy, dtype=np.float64)
    if np.any(energy < 0) or sigma2 < 0:
        raise ValueError("energy and sigma2 must be non-negative")
    g_c_val = np.asarray(g_c_val, dtype=np.float64)
    g_d_val = np.asarray(g_d_val, dtype=np.float64)
    out = (g_d_val * g_c_val - 1.0) ** 2 * energy + g_d_val**2 * sigma2
    return out if np.ndim(out) else float(out)


def _inverse_error(g_c: np.ndarray, sigma2: float) -> np.ndarray:
    """``sigma2 / g_c**2`` of the exact inverse; infinite where ``g_c`` vanishes."""
    out = np.full(g_c.shape, np.inf)
    np.divide(sigma2, g_c * g_c, out=out, where=g_c != 0)
    return out


def verify_prop1(kernel: KernelSpec, lam, sigma2: float, clamp: float = DEFAULT_CLAMP) -> SpectralReport:
    """Error of inverse recovery, ``sum_i sigma2 / g_c(lam_i)**2``.

    The exact inverse term is infinite where ``g_c = 0``; ``extra`` also
    carries the noise term of the clamped inverse actually used in
    decoding and whether any ``|g_c|`` fell under the clamp.
    """
    lam = np.asarray(lam, dtype=np.float64)
    g_c = np.asarray(eval_conv(kernel, lam), dtype=np.float64) * np.ones_like(lam)
    g_d = np.asarray(eval_inverse(kernel, lam, clamp), dtype=np.float64) * np.ones_like(lam)
    errors = _inverse_error(g_c, sigma2)
    report = SpectralReport(
        name="prop1",
        lam=lam,
        energy=np.full(lam.shape, np.nan),
        g_c=g_c,
        filters={"inverse": g_d},
        errors={"inverse": errors},
    )
    report.extra["mse_clamped"] = float(np.sum(g_d * g_d * sigma2))
    report.extra["divergent"] = float(np.any(np.abs(g_c) < clamp))
    report.checks["finite_or_flagged"] = bool(np.isfinite(errors).all() or report.extra["divergent"])
    return report


def verify_prop2(
    kernel: KernelSpec,
    lam,
    energies,
    sigma2: float,
    variances=None,
    clamp: float = DEFAULT_CLAMP,
) -> SpectralReport:
    """Compare Wiener and inverse recovery given per-spectrum energies.

    Checks that the Wiener error is no larger than the exact-inverse and
    the clamped-inverse error, that it matches the closed form
    ``sum sigma2 / (g_c**2 + sigma2 / E_i)``, and that the variance of the
    Wiener estimate is no larger. ``variances`` are ``VAR[x*_i]`` and
    default to the energies (zero-mean signal).
    """
    lam = np.asarray(lam, dtype=np.float64)
    energies = np.asarray(energies, dtype=np.float64) * np.ones_like(lam)
    if np.any(energies <= 0):
        raise ValueError("energies must be positive")
    variances = energies if variances is None else np.asarray(variances, dtype=np.float64) * np.ones_like(lam)
    g_c = np.asarray(eval_conv(kernel, lam), dtype=np.float64) * np.ones_like(lam)
    g_inv = np.asarray(eval_inverse(kernel, lam, clamp), dtype=np.float64) * np.ones_like(lam)
    g_w = np.asarray(wiener_gain(g_c, sigma2 / energies)) * np.ones_like(lam)

    s_w = spectral_error(lam, energies, sigma2, g_c, g_w)
    s_inv = _inverse_error(g_c, sigma2)
    s_clamped = spectral_error(lam, energies, sigma2, g_c, g_inv)
    denom = g_c * g_c + sigma2 / energies
    closed = np.sum(np.divide(sigma2, denom, out=energies.copy(), where=denom > 0))

    # spectral variance of each estimate: g_d**2 (g_c**2 VAR[x*] + sigma2)
    var_inv = np.sum(variances + _inverse_error(g_c, sigma2))
    rho = np.zeros_like(g_c)
    np.divide(g_c * g_c, g_c * g_c + sigma2 / energies, out=rho, where=g_c != 0)
    var_w = np.sum(rho * rho * (variances + np.where(g_c != 0, _inverse_error(g_c, sigma2), 0.0)))

    report = SpectralReport(
        name="prop2",
        lam=lam,
        energy=energies,
        g_c=g_c,
        filters={"wiener": g_w, "inverse": g_inv},
        errors={"wiener": s_w, "inverse": s_inv, "inverse_clamped": s_clamped},
    )
    mse_w, mse_inv, mse_clamped = float(np.sum(s_w)), float(np.sum(s_inv)), float(np.sum(s_clamped))
    scale = max(1.0, abs(closed))
    report.extra.update(
        mse_wiener=mse_w, mse_inverse=mse_inv, mse_inverse_clamped=mse_clamped,
        closed_form=float(closed), var_wiener=float(var_w), var_inverse=float(var_inv),
    )
    report.checks["wiener_le_inverse"] = bool(mse_w <= mse_inv + TIE_TOL * max(1.0, mse_w))
    report.checks["wiener_le_clamped"] = bool(mse_w <= mse_clamped + TIE_TOL * max(1.0, mse_w))
    report.checks["closed_form"] = bool(abs(mse_w - closed) <= 1e-9 * scale)
    report.checks["variance"] = bool(var_w <= var_inv + TIE_TOL * max(1.0, var_w))
    if sigma2 > 0 and np.any(g_c != 0):
        report.checks["strict"] = bool(mse_w < mse_inv)
    return report


def verify_prop3(
    kernel: KernelSpec,
    lam,
    energies,
    sigma2: float,
    gamma1: float,
    gamma2: float,
    avg_energy: float | None = None,
    tol: float = TIE_TOL,
) -> SpectralReport:
    """Three-way error ordering of the averaged Wiener filters.

    With ``xbar_g = gamma * avg_energy`` (``avg_energy`` defaults to the
    mean energy), every spectrum with ``E_i <= xbar_g1 <= xbar_g2`` must
    satisfy ``S(g_w,g1) <= S(g_w,g2) <= S(1/g_c)`` up to ``tol`` scaled by
    the magnitudes involved. Other spectra are reported as skipped.
    """
    lam = np.asarray(lam, dtype=np.float64)
    energies = np.asarray(energies, dtype=np.float64) * np.ones_like(lam)
    if np.any(energies < 0):
        raise ValueError("energies must be non-negative")
    if gamma1 <= 0 or gamma2 <= 0:
        raise ValueError("gammas must be positive")
    avg = float(np.mean(energies)) if avg_energy is None else float(avg_energy)
    if avg <= 0:
        raise ValueError("average energy must be positive")
    x1, x2 = gamma1 * avg, gamma2 * avg
    g_c = np.asarray(eval_conv(kernel, lam), dtype=np.float64) * np.ones_like(lam)
    g1 = np.asarray(wiener_gain(g_c, sigma2 / x1)) * np.ones_like(lam)
    g2 = np.asarray(wiener_gain(g_c, sigma2 / x2)) * np.ones_like(lam)
    s1 = spectral_error(lam, energies, sigma2, g_c, g1)
    s2 = spectral_error(lam, energies, sigma2, g_c, g2)
    s3 = _inverse_error(g_c, sigma2)
    with np.errstate(divide="ignore"):
        g_inv = np.where(g_c != 0, 1.0 / np.where(g_c != 0, g_c, 1.0), np.inf)

    applies = (energies <= x1) & (x1 <= x2)
    slack = tol * np.maximum(1.0, np.maximum(np.abs(s1), np.abs(s2)))
    ok = (s1 <= s2 + slack) & (s2 <= s3 + slack)
    report = SpectralReport(
        name="prop3",
        lam=lam,
        energy=energies,
        g_c=g_c,
        filters={"wiener_g1": g1, "wiener_g2": g2, "inverse": g_inv},
        errors={"wiener_g1": s1, "wiener_g2": s2, "inverse": s3},
        skipped=~applies,
    )
    report.extra.update(xbar1=x1, xbar2=x2, checked=float(applies.sum()), violations=float((applies & ~ok).sum()))
    report.checks["ordering"] = bool(np.all(ok[applies]))
    return report


@dataclass
class MonteCarloResult:
    empirical: float
    analytic: float
    trials: int
    stderr: float


def monte_carlo_reconstruction(
    g: Graph,
    kernel: KernelSpec,
    filter_mode: str,
    sigma: float,
    trials: int,
    seed: int,
    gamma: float | None = None,
    dim: int = 1,
    eigen: EigenDecomposition | None = None,
    clamp: float = DEFAULT_CLAMP,
) -> MonteCarloResult:
    """Empirical recovery error of ``h = g_c(L) x + eps`` with exact filters.

    ``x`` (N x dim, standard normal) is drawn once from the seed; each
    trial draws fresh noise of standard deviation ``sigma`` and recovers
    ``x_hat = g_d(L) h``. The returned error is the trial mean of
    ``||x - x_hat||**2`` per column. ``filter_mode="wiener"`` uses the
    realised energies ``mean_col (u_i^T x)**2``, or, when ``gamma`` is
    given, their average scaled by ``gamma``. The same seed yields the same
    signal and noise in either mode, so runs pair up. ``analytic`` is the
    expected error given this ``x``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if filter_mode not in ("inverse", "wiener"):
        raise ValueError(f"unknown filter mode {filter_mode!r}")
    ed = eigen if eigen is not None else eigh_symmetric(normalized_laplacian(g).to_dense())
    n = ed.n
    u, lam = ed.eigenvectors, ed.eigenvalues
    x = gaussian_matrix(SeededRng(derive_seed(seed, "mc-signal")), n, dim)
    xs = u.T @ x
    energy = np.mean(xs * xs, axis=1)
    sigma2 = sigma * sigma
    g_c = np.asarray(eval_conv(kernel, lam)) * np.ones(n)
    if filter_mode == "inverse":
        g_d = np.asarray(eval_inverse(kernel, lam, clamp)) * np.ones(n)
    elif gamma is None:
        aer = np.zeros(n) if sigma2 == 0 else np.divide(sigma2, energy, out=np.full(n, np.inf), where=energy > 0)
        g_d = np.asarray(wiener_gain(g_c, aer)) * np.ones(n)
    else:
        g_d = np.asarray(wiener_gain(g_c, sigma2 / (gamma * np.mean(energy)))) * np.ones(n)

    # x - x_hat = U (x* - g_d (g_c x* + U^T eps)) and U is orthogonal
    noise_rng = SeededRng(derive_seed(seed, "mc-noise"))
    bias = (g_d * g_c - 1.0)[:, None] * xs
    per_trial = np.empty(trials)
    chunk = max(1, 2_000_000 // max(1, n * dim))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        eps = sigma * gaussian_matrix(noise_rng, m, n * dim).reshape(m, n, dim)
        err = bias[None] + g_d[None, :, None] * (u.T @ eps)
        per_trial[done : done + m] = np.sum(err * err, axis=(1, 2)) / dim
        done += m
    analytic = float(np.sum(spectral_error(lam, energy, sigma2, g_c, g_d)))
    return MonteCarloResult(
        empirical=float(per_trial.mean()),
        analytic=analytic,
        trials=trials,
        stderr=float(per_trial.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan"),
    )


def stability_sweep(
    cfg: ModelConfig,
    betas,
    g: Graph,
    x: np.ndarray,
    labels=None,
    modes=("wiener", "inverse"),
    probe_trials: int = 5,
) -> list[dict]:
    """Train one model per (beta, decoder mode) cell and tabulate the outcome.

    All cells share ``cfg`` apart from the two swept fields, including the
    seed, so cells differ only in what is swept. With ``labels`` each row
    also carries the mean probe accuracy of the learned embedding.
    """
    betas = [float(b) for b in betas]
    if any(b < 0 for b in betas):
        raise ValueError("betas must be non-negative")
    rows = []
    for beta in betas:
        for mode in modes:
            cell = replace(cfg, beta=beta, decoder_mode=mode)
            result = train(cell, g, x)
            row = {
                "beta": beta,
                "decoder_mode": mode,
                "seed": cell.seed,
                "initial_loss": result.history[0] if result.history else float("nan"),
                "final_loss": result.history[-1] if result.history else float("nan"),
                "probe_accuracy": "",
            }
            if labels is not None:
                row["probe_accuracy"] = probe_accuracy(result.embedding, labels, trials=probe_trials, seed=cell.seed)
            rows.append(row)
    return rows


def loss_ratios(rows: list[dict]) -> dict[float, float]:
    """``final_loss(inverse) / final_loss(wiener)`` per beta of a sweep table."""
    by = {(r["beta"], r["decoder_mode"]): r["final_loss"] for r in rows}
    return {b: by[(b, "inverse")] / by[(b, "wiener")] for b, m in by if m == "wiener" and (b, "inverse") in by}


def write_report_csv(path, reports: list[SpectralReport]) -> None:
    write_rows_csv(path, [row for r in reports for row in r.rows()], REPORT_HEADER)


def write_sweep_csv(path, rows: list[dict]) -> None:
    write_rows_csv(path, rows, SWEEP_HEADER)
