"""Acceptance criteria 1-11, each at its stated tolerance and time budget.

Every test records its outcome through the ``record`` fixture; the
terminal summary prints one PASS/FAIL line per criterion. Criteria that
do not hold with this implementation are marked ``xfail(strict=True)``:
they still run at full tolerance and report FAIL, and an unexpected pass
fails the suite.
"""

import time

import numpy as np
import pytest

from graph_wiener.autoencoder import ModelConfig, gradient_check, prepare_graph, train
from graph_wiener.datasets import community_features, gaussian_features, generate_sbm, karate_graph
from graph_wiener.evaluation import loss_ratios, monte_carlo_reconstruction, stability_sweep, verify_prop2, verify_prop3
from graph_wiener.graph import normalized_laplacian
from graph_wiener.kernels import KERNELS, KernelSpec, eval_conv, spectral_apply_exact, wiener_gain
from graph_wiener.linalg import SeededRng, derive_seed, eigh_symmetric, gaussian_matrix
from graph_wiener.probe import logistic_probe, probe_accuracy
from graph_wiener.remez import apply_matrix_polynomial, chebyshev_nodes, grid_error, poly_eval, remez_fit

SEEDS = range(5)
# the seeded SBM of criteria 9 and 10
SBM_BLOCKS, SBM_P_IN, SBM_P_OUT = [100, 100], 0.1, 0.01
SBM_DIM, SBM_SIGNAL = 16, 6.0


def seeded_sbm(seed):
    g, y = generate_sbm(SBM_BLOCKS, SBM_P_IN, SBM_P_OUT, seed)
    return g, community_features(y, SBM_DIM, SBM_SIGNAL, seed), y


def random_instance(rng, size):
    kind = KERNELS[int(rng.integers(len(KERNELS)))]
    lam = np.sort(rng.uniform(0, 2, size))
    energies = rng.uniform(0.05, 3.0, size)
    return KernelSpec(kind), lam, energies, float(rng.uniform(0.0, 1.0))


def test_criterion_1_prop2_analytic(record):
    rng = np.random.default_rng(2024)
    instances = [random_instance(rng, int(rng.integers(1, 30))) for _ in range(50)]
    instances[0] = (instances[0][0], instances[0][1], instances[0][2], 0.0)
    start = time.perf_counter()
    failures, strict = 0, 0
    for k, lam, energies, sigma2 in instances:
        r = verify_prop2(k, lam, energies, sigma2)
        ok = r.checks["wiener_le_inverse"]
        if sigma2 > 0 and np.any(eval_conv(k, lam) != 0):
            strict += 1
            ok = ok and r.checks["strict"]
        failures += not ok
    elapsed = time.perf_counter() - start
    passed = failures == 0 and strict >= 45 and elapsed < 1.0
    record(1, "prop2 analytic", passed, f"{failures} violations in 50, {strict} strict, {elapsed:.3f}s")
    assert passed


def test_criterion_2_prop2_monte_carlo(record):
    g, _ = generate_sbm([10, 10], 0.5, 0.1, 0)
    heat = KernelSpec("heat")
    start = time.perf_counter()
    ed = eigh_symmetric(normalized_laplacian(g).to_dense())
    inv = monte_carlo_reconstruction(g, heat, "inverse", 0.3, 10_000, seed=0, eigen=ed)
    wie = monte_carlo_reconstruction(g, heat, "wiener", 0.3, 10_000, seed=0, eigen=ed)
    elapsed = time.perf_counter() - start
    rel = [abs(r.empirical - r.analytic) / r.analytic for r in (inv, wie)]
    passed = max(rel) <= 0.05 and wie.empirical < inv.empirical and elapsed < 30
    detail = (
        f"inverse {inv.empirical:.3f} vs {inv.analytic:.3f}, wiener {wie.empirical:.3f} vs "
        f"{wie.analytic:.3f}, max rel {max(rel):.3f}, {elapsed:.2f}s"
    )
    record(2, "monte carlo", passed, detail)
    assert passed


def test_criterion_3_prop3_ordering(record):
    rng = np.random.default_rng(7)
    checked = violations = 0
    for _ in range(20):
        k, lam, energies, sigma2 = random_instance(rng, 16)
        r = verify_prop3(k, lam, energies, sigma2, 1.0, 10.0, tol=1e-12)
        checked += int(r.extra["checked"])
        violations += int(r.extra["violations"])
    passed = violations == 0 and checked > 0
    record(3, "prop3 ordering", passed, f"{violations} violations over {checked} gated spectra")
    assert passed


def test_criterion_4_alternation_and_reproduction(record):
    worst_alt = 0.0
    for kind in KERNELS:
        k = KernelSpec(kind)
        for target in (lambda t: eval_conv(k, t), lambda t: wiener_gain(eval_conv(k, t), 0.2)):
            for order in (1, 2, 5, 9, 16):
                p = remez_fit(target, order)
                nodes = chebyshev_nodes(order + 2, 0.0, 2.0)
                resid = target(nodes) - poly_eval(p, nodes)
                want = p.leveled_error * (-1.0) ** np.arange(order + 2)
                worst_alt = max(worst_alt, float(np.max(np.abs(resid - want))))
    rng = np.random.default_rng(4)
    worst_e = 0.0
    for _ in range(40):
        degree = int(rng.integers(0, 17))
        coeffs = rng.uniform(-3, 3, int(rng.integers(1, degree + 2)))
        p = remez_fit(np.polynomial.Polynomial(coeffs), degree)
        worst_e = max(worst_e, abs(p.leveled_error))
    ok_alt = record(4, "alternation", worst_alt <= 1e-8, f"max deviation {worst_alt:.1e}")
    ok_rep = record(4, "reproduction", worst_e <= 1e-9, f"max |e| {worst_e:.1e}")
    assert ok_alt and ok_rep


@pytest.mark.parametrize(
    "kind",
    [
        "heat",
        pytest.param(
            "ppr",
            marks=pytest.mark.xfail(
                strict=True,
                reason="one-shot fit at first-kind nodes leaves a ppr endpoint error of 4.5 |e| at K=2",
            ),
        ),
    ],
)
def test_criterion_4_grid_error(record, kind):
    k = KernelSpec(kind)
    f = lambda t: eval_conv(k, t)
    p = remez_fit(f, 2)
    err = grid_error(f, p, 1001)
    passed = err <= 3 * abs(p.leveled_error)
    record(4, f"{kind} K=2 grid", passed, f"{err:.4f} vs 3|e| = {3 * abs(p.leveled_error):.4f}")
    assert passed


def test_criterion_5_polynomial_vs_exact(record):
    rng = SeededRng(derive_seed(5, "criterion-5"))
    orders = {"gcn": 9, "heat": 2, "ppr": 2}
    worst = 0.0
    sizes = []
    for i in range(20):
        n = 20 + int(rng.next_u64(1)[0] % 181)
        sizes.append(n)
        g, _ = generate_sbm([n // 2, n - n // 2], 0.25, 0.04, derive_seed(5, f"graph-{i}"))
        lap = normalized_laplacian(g)
        ed = eigh_symmetric(lap.to_dense())
        x = gaussian_matrix(rng, n, 3)
        for kind, order in orders.items():
            k = KernelSpec(kind)
            p = remez_fit(lambda t: eval_conv(k, t), order)
            exact = spectral_apply_exact(ed, p, x)
            rel = np.linalg.norm(apply_matrix_polynomial(lap, p, x) - exact) / np.linalg.norm(exact)
            worst = max(worst, float(rel))
    passed = worst <= 1e-8 and max(sizes) <= 200
    record(5, "polynomial vs exact", passed, f"max relative {worst:.1e}, N in [{min(sizes)}, {max(sizes)}]")
    assert passed


def test_criterion_6_edge_scaling(record):
    # one column on a dense graph keeps the per-edge work dominant
    n = 4000
    p = remez_fit(lambda t: eval_conv(KernelSpec("heat"), t), 9)
    x = gaussian_matrix(SeededRng(6), n, 1)
    times, edges = [], []
    for p_in in (0.06, 0.12):
        g, _ = generate_sbm([n // 2, n // 2], p_in, p_in / 10, 6)
        lap = normalized_laplacian(g)
        apply_matrix_polynomial(lap, p, x)  # warm-up
        runs = []
        for _ in range(5):
            start = time.perf_counter()
            apply_matrix_polynomial(lap, p, x)
            runs.append(time.perf_counter() - start)
        times.append(float(np.median(runs)))
        edges.append(g.num_edges)
    ratio = times[1] / times[0]
    passed = 1.5 <= ratio <= 3.0
    record(6, "O(K|E|) scaling", passed, f"|E| {edges[0]} -> {edges[1]}, time ratio {ratio:.2f}")
    assert passed


def test_criterion_7_gradient_check(record):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        g, _ = generate_sbm([4, 4], 0.7, 0.2, seed)
        x = gaussian_matrix(SeededRng(derive_seed(seed, "gc-x")), 8, 3)
        cfg = ModelConfig(input_dim=3, hidden_dim=4, beta=0.5, seed=seed, skip_connection=seed % 2 == 1)
        worst = max(worst, max(gradient_check(cfg, prepare_graph(g), x)))
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-4 and elapsed < 10
    record(7, "gradient check", passed, f"max relative error {worst:.1e}, {elapsed:.2f}s")
    assert passed


def test_criterion_8_karate_training(record):
    g, _ = karate_graph()
    x = gaussian_features(34, 4, 0)
    cfg = ModelConfig(input_dim=4, hidden_dim=16, num_layers=2, kernel=KernelSpec("heat"), beta=0.2, epochs=200)
    a, b = train(cfg, g, x), train(cfg, g, x)
    same = a.history == b.history and all(np.array_equal(u, v) for u, v in zip(a.params.arrays(), b.params.arrays()))
    ratio = a.history[-1] / a.history[0]
    passed = ratio < 0.5 and same
    record(8, "karate training", passed, f"final/initial {ratio:.3f}, deterministic {same}")
    assert passed


@pytest.mark.slow
def test_criterion_9_stability_sweep(record):
    start = time.perf_counter()
    trends = []
    for seed in SEEDS:
        g, x, _ = seeded_sbm(seed)
        rows = stability_sweep(ModelConfig(input_dim=SBM_DIM, seed=seed), [0.0, 0.5, 1.0], g, x)
        r = loss_ratios(rows)
        trends.append([r[0.0], r[0.5], r[1.0]])
    elapsed = time.perf_counter() - start
    good = sum(a <= b <= c for a, b, c in trends)
    passed = good >= 4 and elapsed < 300
    shown = " ".join("[" + ",".join(f"{v:.2f}" for v in t) + "]" for t in trends)
    record(9, "ratio trend", passed, f"non-decreasing in {good}/5 seeds {shown}, {elapsed:.0f}s")
    assert passed


ABLATION = {
    "WGDN": dict(augment=True, decoder_mode="wiener"),
    "WGDN-A": dict(augment=False, decoder_mode="wiener"),
    "WGDN-AW": dict(augment=False, decoder_mode="inverse"),
}


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the augmentation-free variant probes at least as well at desk scale")
def test_criterion_10_ablation(record):
    start = time.perf_counter()
    acc = {name: [] for name in ABLATION}
    for seed in SEEDS:
        g, x, y = seeded_sbm(seed)
        for name, flags in ABLATION.items():
            emb = train(ModelConfig(input_dim=SBM_DIM, seed=seed, **flags), g, x).embedding
            acc[name].append(probe_accuracy(emb, y, trials=10, seed=seed))
    elapsed = time.perf_counter() - start
    med = {k: float(np.median(v)) for k, v in acc.items()}
    passed = med["WGDN"] >= med["WGDN-A"] >= med["WGDN-AW"] and med["WGDN"] >= 0.9 and elapsed < 600
    shown = ", ".join(f"{k} {v:.4f}" for k, v in med.items())
    record(10, "ablation ordering", passed, f"medians {shown}, {elapsed:.0f}s")
    assert passed


def test_criterion_11_probe(record):
    rng = np.random.default_rng(11)
    y = np.repeat([0, 1], 100)
    blobs = rng.normal(scale=0.3, size=(200, 2)) + np.where(y[:, None] == 0, -3.0, 3.0)
    blob_acc = logistic_probe(blobs, y, seed=0).accuracy
    null = probe_accuracy(blobs, y[SeededRng(11).permutation(200)], trials=20, seed=1)
    passed = blob_acc == 1.0 and abs(null - 0.5) <= 0.1
    record(11, "probe", passed, f"blobs {blob_acc:.3f}, permutation null {null:.3f}")
    assert passed
