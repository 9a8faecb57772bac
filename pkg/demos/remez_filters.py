"""Polynomial fits of the three kernels and their Wiener filters.

For each kernel and order the leveled error e of the one-shot fit is
printed next to the largest error on a 1001-point grid. The fit is then
applied to a feature matrix with sparse products only and compared with
the exact spectral filter.
"""

import numpy as np

from graph_wiener import (
    KernelSpec,
    apply_matrix_polynomial,
    eigh_symmetric,
    eval_conv,
    generate_sbm,
    grid_error,
    normalized_laplacian,
    remez_fit,
    wiener_gain,
)

print("kernel filter  K   |e|        grid error")
for kind in ("gcn", "heat", "ppr"):
    k = KernelSpec(kind)
    targets = {
        "conv": lambda t: eval_conv(k, t),
        "wiener": lambda t: wiener_gain(eval_conv(k, t), 0.1),
    }
    for name, f in targets.items():
        for order in (2, 5, 9):
            p = remez_fit(f, order)
            print(f"{kind:6s} {name:6s} {order:2d}  {abs(p.leveled_error):.3e}  {grid_error(f, p):.3e}")

g, _ = generate_sbm([60, 60], 0.2, 0.02, seed=3)
lap = normalized_laplacian(g)
ed = eigh_symmetric(lap.to_dense())
x = np.random.default_rng(0).normal(size=(g.num_nodes, 4))
k = KernelSpec("heat")
for order in (2, 5, 9):
    p = remez_fit(lambda t: eval_conv(k, t), order)
    approx = apply_matrix_polynomial(lap, p, x)
    exact = ed.apply(lambda t: eval_conv(k, t), x)
    rel = np.linalg.norm(approx - exact) / np.linalg.norm(exact)
    print(f"heat K={order}: relative error of the sparse filter {rel:.2e}")
