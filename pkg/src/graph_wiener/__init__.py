"""Graph Wiener deconvolution.

Spectral filters on the normalized Laplacian, one-shot Remez polynomial
fits applied without an eigendecomposition, a graph autoencoder whose
decoder deconvolves with averaged Wiener filters, and numerical checks of
the underlying error bounds.
"""

from .autoencoder import (
    ModelConfig,
    Params,
    TrainResult,
    decode,
    encode,
    forward,
    gradient_check,
    load_checkpoint,
    loss,
    prepare_graph,
    readout,
    save_checkpoint,
    train,
)
from .datasets import community_features, gaussian_features, generate_sbm, karate_graph
from .evaluation import (
    monte_carlo_reconstruction,
    spectral_error,
    stability_sweep,
    verify_prop1,
    verify_prop2,
    verify_prop3,
)
from .graph import Graph, SparseOperator, build_graph, normalized_laplacian, random_walk_matrix, spmm
from .kernels import KernelSpec, WienerSpec, eval_conv, eval_inverse, eval_wiener, spectral_apply_exact, wiener_gain
from .linalg import SeededRng, derive_seed, eigh_symmetric, solve_linear
from .probe import logistic_probe, probe_accuracy
from .remez import RemezPolynomial, apply_matrix_polynomial, chebyshev_nodes, grid_error, remez_fit

__version__ = "0.1.0"
