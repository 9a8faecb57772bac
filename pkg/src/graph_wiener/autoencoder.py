"""Graph autoencoder with a multi-channel Wiener deconvolution decoder.

Encoder (M layers)::

    H[m+1] = prelu(g_c(L) H[m] W[m])           H[0] = X

The last encoder activation is optional. The embedding H[M] is perturbed
with Gaussian noise ``beta * N(0, var(H[M]))`` during training. The decoder
mirrors the encoder with q channels per layer::

    Z_i = prelu(D_i(L) Hhat W_i)     Hhat_next = AGG(Z_1, ..., Z_q)

Each ``D_i`` is a degree-K polynomial in L fitted on every forward pass to
the averaged Wiener filter ``g_c / (g_c**2 + sigma2 / (gamma_i * energy))``,
with ``sigma2`` and ``energy`` estimated from the layer input. The output
layer has no activation. Fitted filters and the estimates are constants
for backpropagation; the noise is reparameterized as ``beta * std(H) * E``
with the standard-normal draw ``E`` fixed, so gradients do flow through
``std(H)`` (otherwise the surrogate rewards inflating H to outgrow the
noise).

Gradients are computed by hand (reverse accumulation over the cached
forward pass) and parameters are updated with Adam.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph, SparseOperator, normalized_laplacian, random_walk_matrix
from .kernels import (
    DEFAULT_CLAMP,
    KernelSpec,
    estimate_avg_energy,
    estimate_sigma2,
    eval_conv,
    eval_inverse,
    wiener_gain,
)
from .linalg import EigenDecomposition, SeededRng, derive_seed, eigh_symmetric, gaussian_matrix, glorot_init
from .remez import MAX_DEGREE, RemezPolynomial, apply_matrix_polynomial, remez_fit

AGGREGATORS = ("sum", "avg", "max")
DECODER_MODES = ("wiener", "inverse")
SPECTRAL_MODES = ("remez", "exact")
READOUTS = ("max", "avg", "sum")


def default_order(kernel: KernelSpec) -> int:
    return 9 if kernel.kind == "gcn" else 2


@dataclass
class ModelConfig:
    input_dim: int
    hidden_dim: int = 16
    num_layers: int = 2
    kernel: KernelSpec = field(default_factory=KernelSpec)
    channels: int = 3
    gammas: tuple[float, ...] = (0.1, 1.0, 10.0)
    beta: float = 1.0
    remez_order: int | None = None
    agg: str = "sum"
    last_activation: bool = True
    skip_connection: bool = False
    decoder_mode: str = "wiener"
    augment: bool = True
    spectral_mode: str = "remez"
    inverse_clamp: float = DEFAULT_CLAMP
    seed: int = 0
    lr: float = 0.001
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    epochs: int = 200

    def __post_init__(self):
        if isinstance(self.kernel, dict):
            self.kernel = KernelSpec(**self.kernel)
        self.gammas = tuple(float(g) for g in self.gammas)
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        if self.remez_order is None:
            self.remez_order = default_order(self.kernel)
        if self.num_layers < 1:
            raise ValueError("num_layers must be at least 1")
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.channels < 1 or len(self.gammas) != self.channels:
            raise ValueError(f"need one gamma per channel: channels={self.channels}, gammas={self.gammas}")
        if any(g <= 0 for g in self.gammas):
            raise ValueError("gammas must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not 0 <= self.remez_order <= MAX_DEGREE:
            raise ValueError(f"remez_order must be in [0, {MAX_DEGREE}]")
        if self.agg not in AGGREGATORS:
            raise ValueError(f"agg must be one of {AGGREGATORS}")
        if self.decoder_mode not in DECODER_MODES:
            raise ValueError(f"decoder_mode must be one of {DECODER_MODES}")
        if self.spectral_mode not in SPECTRAL_MODES:
            raise ValueError(f"spectral_mode must be one of {SPECTRAL_MODES}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gammas"] = list(self.gammas)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# graph operators and filters


@dataclass(frozen=True, eq=False)
class GraphOperators:
    """Laplacian, random-walk matrix and (optionally) the exact spectrum."""

    graph: Graph
    laplacian: SparseOperator
    random_walk: SparseOperator
    eigen: EigenDecomposition | None = None

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes


def prepare_graph(g: Graph, exact: bool = False) -> GraphOperators:
    lap = normalized_laplacian(g)
    eigen = eigh_symmetric(lap.to_dense()) if exact else None
    return GraphOperators(graph=g, laplacian=lap, random_walk=random_walk_matrix(g), eigen=eigen)


class PolynomialFilter:
    """``p(L)`` applied with sparse products; symmetric, so it is its own adjoint."""

    def __init__(self, laplacian: SparseOperator, poly: RemezPolynomial):
        self.laplacian = laplacian
        self.poly = poly

    def apply(self, x: np.ndarray) -> np.ndarray:
        return apply_matrix_polynomial(self.laplacian, self.poly, x)


class SpectralFilter:
    """``U f(Lambda) U^T`` for validation on small graphs."""

    def __init__(self, eigen: EigenDecomposition, f):
        self.eigen = eigen
        self.gains = np.asarray(f(eigen.eigenvalues), dtype=np.float64) * np.ones(eigen.n)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.eigen.apply(lambda _: self.gains, x)


def _as_operators(g, exact: bool) -> GraphOperators:
    if isinstance(g, GraphOperators):
        if exact and g.eigen is None:
            raise ValueError("exact spectral mode needs GraphOperators built with exact=True")
        return g
    return prepare_graph(g, exact=exact)


def _make_filter(ops: GraphOperators, f, order: int, exact: bool):
    if exact:
        return SpectralFilter(ops.eigen, f)
    return PolynomialFilter(ops.laplacian, remez_fit(f, order))


def precompute_propagation(g, kernel: KernelSpec, order: int, exact: bool = False):
    """Encoder propagation ``g_c(L)``.

    gcn is exactly ``I - L`` (a degree-1 polynomial); heat and ppr are
    Remez fits of the kernel at ``order``. ``g`` may be a :class:`Graph`
    or prepared :class:`GraphOperators`.
    """
    ops = _as_operators(g, exact)
    if exact:
        return SpectralFilter(ops.eigen, lambda lam: eval_conv(kernel, lam))
    if kernel.kind == "gcn":
        return PolynomialFilter(ops.laplacian, RemezPolynomial(np.array([1.0, -1.0]), 0.0))
    return PolynomialFilter(ops.laplacian, remez_fit(lambda lam: eval_conv(kernel, lam), order))


def decoder_filter(ops: GraphOperators, cfg: ModelConfig, gamma: float, sigma2: float, energy: float):
    """Fit one decoder channel's deconvolution filter for the current estimates."""
    k = cfg.kernel
    if cfg.decoder_mode == "inverse":
        def f(lam):
            return eval_inverse(k, lam, cfg.inverse_clamp)
    else:
        if sigma2 == 0.0:
            aer = 0.0
        elif energy > 0.0:
            aer = sigma2 / (gamma * energy)
        else:
            aer = np.inf

        def f(lam):
            return wiener_gain(eval_conv(k, lam), aer)

    return _make_filter(ops, f, cfg.remez_order, cfg.spectral_mode == "exact")


# ---------------------------------------------------------------------------
# parameters


@dataclass(eq=False)
class Params:
    """Learnable weights.

    ``decoder[j][i]`` is channel ``i`` of the decoder layer ``j`` steps
    below the embedding (j = 0 reads H[M], j = M-1 emits the reconstruction).
    ``decoder_slopes`` has shape (M-1, q): the output layer is linear.
    """

    encoder: list[np.ndarray]
    decoder: list[list[np.ndarray]]
    encoder_slopes: np.ndarray
    decoder_slopes: np.ndarray
    version: int = 0

    def arrays(self) -> list[np.ndarray]:
        flat = list(self.encoder)
        for layer in self.decoder:
            flat.extend(layer)
        flat.append(self.encoder_slopes)
        flat.append(self.decoder_slopes)
        return flat

    def zeros_like(self) -> "Params":
        return Params(
            encoder=[np.zeros_like(w) for w in self.encoder],
            decoder=[[np.zeros_like(w) for w in layer] for layer in self.decoder],
            encoder_slopes=np.zeros_like(self.encoder_slopes),
            decoder_slopes=np.zeros_like(self.decoder_slopes),
        )

    def copy(self) -> "Params":
        return Params(
            encoder=[w.copy() for w in self.encoder],
            decoder=[[w.copy() for w in layer] for layer in self.decoder],
            encoder_slopes=self.encoder_slopes.copy(),
            decoder_slopes=self.decoder_slopes.copy(),
            version=self.version,
        )


def init_params(cfg: ModelConfig) -> Params:
    """Glorot weights and PReLU slopes of 0.25, drawn from ``cfg.seed``."""
    rng = SeededRng(derive_seed(cfg.seed, "init"))
    m, d, h, q = cfg.num_layers, cfg.input_dim, cfg.hidden_dim, cfg.channels
    encoder = [glorot_init(rng, d if k == 0 else h, h) for k in range(m)]
    decoder = [[glorot_init(rng, h, d if j == m - 1 else h) for _ in range(q)] for j in range(m)]
    return Params(
        encoder=encoder,
        decoder=decoder,
        encoder_slopes=np.full(m, 0.25),
        decoder_slopes=np.full((m - 1, q), 0.25),
    )


def _prelu(y: np.ndarray, a: float) -> np.ndarray:
    return np.where(y > 0, y, a * y)


def _prelu_backward(y: np.ndarray, a: float, dz: np.ndarray) -> tuple[np.ndarray, float]:
    neg = y <= 0
    dy = np.where(neg, a * dz, dz)
    da = float(np.sum(y[neg] * dz[neg]))
    return dy, da


# ---------------------------------------------------------------------------
# forward pass


@dataclass
class _EncoderLayer:
    prop: np.ndarray
    pre: np.ndarray
    out: np.ndarray
    activated: bool


@dataclass
class _DecoderStream:
    inp: np.ndarray
    filters: list
    sigma2: float
    energy: float
    props: list
    pres: list
    outs: list
    winner: np.ndarray | None
    out: np.ndarray


@dataclass
class ForwardCache:
    """Everything backward needs, plus the constants a replay must reuse."""

    encoder: list[_EncoderLayer]
    noise: dict  # m -> standard-normal draw E for H[m], or None
    decoder: list[dict]  # decoder[j][stream] -> _DecoderStream, stream in {"d", "e"}
    embedding: np.ndarray
    output: np.ndarray
    version: int

    @property
    def estimates(self) -> list[dict]:
        return [{s: (r.sigma2, r.energy) for s, r in layer.items()} for layer in self.decoder]


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values in {where}")


def encode(p: Params, conv, x: np.ndarray, cfg: ModelConfig) -> tuple[np.ndarray, list[_EncoderLayer]]:
    """Run the encoder; returns H[M] and the per-layer records."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ValueError(f"expected features with {cfg.input_dim} columns, got shape {x.shape}")
    layers = []
    h = x
    for k, w in enumerate(p.encoder):
        prop = conv.apply(h)
        pre = prop @ w
        activated = cfg.last_activation or k < cfg.num_layers - 1
        out = _prelu(pre, p.encoder_slopes[k]) if activated else pre
        _check_finite(out, f"encoder layer {k}")
        layers.append(_EncoderLayer(prop=prop, pre=pre, out=out, activated=activated))
        h = out
    return h, layers


def augment(h: np.ndarray, beta: float, rng: SeededRng) -> np.ndarray:
    """``H + beta * E`` with ``E ~ N(0, var(H))`` entrywise (scalar variance)."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return _perturb(h, beta, gaussian_matrix(rng, *h.shape))


def _perturb(h: np.ndarray, beta: float, e: np.ndarray | None) -> np.ndarray:
    if e is None or beta == 0.0:
        return h
    return h + beta * np.sqrt(np.var(h)) * e


def _perturb_backward(h: np.ndarray, beta: float, e: np.ndarray | None, d: np.ndarray) -> np.ndarray:
    """Gradient on H of ``H + beta * std(H) * E`` given the gradient ``d`` on the output."""
    if e is None or beta == 0.0:
        return d
    std = np.sqrt(np.var(h))
    if std == 0.0:
        return d
    centred = h - h.mean()
    return d + beta * float(np.sum(d * e)) * centred / (h.size * std)


def _decoder_stream(
    p: Params, j: int, inp: np.ndarray, ops: GraphOperators, cfg: ModelConfig, filters=None
) -> _DecoderStream:
    sigma2 = estimate_sigma2(inp, ops.random_walk)
    energy = estimate_avg_energy(inp)
    if filters is None:
        filters = [decoder_filter(ops, cfg, g, sigma2, energy) for g in cfg.gammas]
    activated = j < cfg.num_layers - 1
    props, pres, outs = [], [], []
    for i, (flt, w) in enumerate(zip(filters, p.decoder[j])):
        prop = flt.apply(inp)
        pre = prop @ w
        out = _prelu(pre, p.decoder_slopes[j, i]) if activated else pre
        _check_finite(out, f"decoder layer {cfg.num_layers - j} channel {i}")
        props.append(prop)
        pres.append(pre)
        outs.append(out)
    winner = None
    if cfg.agg == "sum":
        out = np.sum(outs, axis=0)
    elif cfg.agg == "avg":
        out = np.mean(outs, axis=0)
    else:
        stacked = np.stack(outs)
        winner = np.argmax(stacked, axis=0)  # ties -> lowest channel
        out = np.take_along_axis(stacked, winner[None], axis=0)[0]
    return _DecoderStream(inp, filters, sigma2, energy, props, pres, outs, winner, out)


def decode(
    p: Params,
    ops: GraphOperators,
    h_hat: np.ndarray,
    cfg: ModelConfig,
    skip_inputs: dict | None = None,
    replay: ForwardCache | None = None,
) -> tuple[np.ndarray, list[dict]]:
    """Run the decoder from the (augmented) embedding.

    ``skip_inputs`` maps encoder depth m (1..M-1) to the augmented
    intermediate ``H[m] + noise``; when given, decoder layer m runs on both
    streams and averages them. ``replay`` reuses the fitted filters of an
    earlier pass instead of refitting.
    """
    layers = []
    h = h_hat
    for j in range(cfg.num_layers):
        m = cfg.num_layers - j

        def fitted(stream):
            return None if replay is None else replay.decoder[j][stream].filters

        rec = {"d": _decoder_stream(p, j, h, ops, cfg, fitted("d"))}
        if skip_inputs is not None and m in skip_inputs:
            rec["e"] = _decoder_stream(p, j, skip_inputs[m], ops, cfg, fitted("e"))
            h = 0.5 * (rec["d"].out + rec["e"].out)
        else:
            h = rec["d"].out
        layers.append(rec)
    return h, layers


def forward(
    p: Params,
    conv,
    ops: GraphOperators,
    x: np.ndarray,
    cfg: ModelConfig,
    rng: SeededRng | None = None,
    replay: ForwardCache | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """One training forward pass: encode, augment, decode.

    Noise is drawn from ``rng`` only when ``cfg.augment`` is set; with
    ``replay`` the noise and fitted filters of that cache are reused, which
    makes the pass a smooth function of the parameters alone.
    """
    h, enc = encode(p, conv, x, cfg)
    skip = cfg.skip_connection and cfg.num_layers >= 2
    depths = list(range(1, cfg.num_layers + 1)) if skip else [cfg.num_layers]
    if replay is not None:
        noise = replay.noise
    else:
        noise = {}
        for m in depths:
            hm = enc[m - 1].out
            noise[m] = gaussian_matrix(rng, *hm.shape) if cfg.augment and rng is not None else None
    h_hat = _perturb(h, cfg.beta, noise[cfg.num_layers])
    skip_inputs = (
        {m: _perturb(enc[m - 1].out, cfg.beta, noise[m]) for m in depths if m < cfg.num_layers} if skip else None
    )
    out, dec = decode(p, ops, h_hat, cfg, skip_inputs=skip_inputs, replay=replay)
    return out, ForwardCache(enc, noise, dec, h, out, p.version)


def skip_forward(p: Params, conv, ops: GraphOperators, x: np.ndarray, cfg: ModelConfig, rng: SeededRng | None):
    """Forward pass with the encoder-to-decoder skip streams (needs M >= 2)."""
    if not cfg.skip_connection or cfg.num_layers < 2:
        raise ValueError("skip_forward needs skip_connection=True and num_layers >= 2")
    return forward(p, conv, ops, x, cfg, rng)


def loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Frobenius norm of the reconstruction error (not squared)."""
    x, x_hat = np.asarray(x, dtype=np.float64), np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    return float(np.linalg.norm(x - x_hat))


# ---------------------------------------------------------------------------
# backward pass


def _stream_backward(rec: _DecoderStream, j: int, dout: np.ndarray, p: Params, grads: Params, cfg: ModelConfig):
    q = cfg.channels
    activated = j < cfg.num_layers - 1
    dinp = np.zeros_like(rec.inp)
    for i in range(q):
        if cfg.agg == "sum":
            dz = dout
        elif cfg.agg == "avg":
            dz = dout / q
        else:
            dz = np.where(rec.winner == i, dout, 0.0)
        if activated:
            dy, da = _prelu_backward(rec.pres[i], p.decoder_slopes[j, i], dz)
            grads.decoder_slopes[j, i] += da
        else:
            dy = dz
        w = p.decoder[j][i]
        grads.decoder[j][i] += rec.props[i].T @ dy
        dinp += rec.filters[i].apply(dy @ w.T)
    return dinp


def backward_from(cache: ForwardCache, d_output: np.ndarray, p: Params, cfg: ModelConfig, conv) -> Params:
    """Reverse accumulation from an upstream gradient on the reconstruction."""
    if cache.version != p.version:
        raise RuntimeError("stale cache: parameters changed since the forward pass")
    grads = p.zeros_like()
    m_total = cfg.num_layers
    skip_grad = {}
    d = d_output
    for j in range(m_total - 1, -1, -1):
        rec = cache.decoder[j]
        share = 0.5 * d if "e" in rec else d
        if "e" in rec:
            skip_grad[m_total - j] = _stream_backward(rec["e"], j, share, p, grads, cfg)
        d = _stream_backward(rec["d"], j, share, p, grads, cfg)
    d = _perturb_backward(cache.embedding, cfg.beta, cache.noise[m_total], d)
    for k in range(m_total - 1, -1, -1):
        layer = cache.encoder[k]
        if (k + 1) in skip_grad:
            d = d + _perturb_backward(layer.out, cfg.beta, cache.noise[k + 1], skip_grad[k + 1])
        if layer.activated:
            dy, da = _prelu_backward(layer.pre, p.encoder_slopes[k], d)
            grads.encoder_slopes[k] += da
        else:
            dy = d
        grads.encoder[k] += layer.prop.T @ dy
        d = conv.apply(dy @ p.encoder[k].T)
    return grads


def backward(cache: ForwardCache, x: np.ndarray, cfg: ModelConfig, p: Params, conv) -> Params:
    """Gradients of ``||X - Xhat||_F`` for every weight and PReLU slope."""
    r = cache.output - x
    norm = float(np.linalg.norm(r))
    d = r / norm if norm > 0 else np.zeros_like(r)
    return backward_from(cache, d, p, cfg, conv)


# ---------------------------------------------------------------------------
# optimisation


@dataclass(eq=False)
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, p: Params) -> "AdamState":
        return cls([np.zeros_like(a) for a in p.arrays()], [np.zeros_like(a) for a in p.arrays()])


def adam_step(
    p: Params,
    grads: Params,
    st: AdamState,
    lr: float = 0.001,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update, in place."""
    b1, b2 = betas
    st.step += 1
    c1 = 1.0 - b1**st.step
    c2 = 1.0 - b2**st.step
    for w, g, m, v in zip(p.arrays(), grads.arrays(), st.m, st.v):
        if w.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {w.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    p.version += 1


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass
class TrainResult:
    params: Params
    history: list[float]
    embedding: np.ndarray
    adam: AdamState


def train(cfg: ModelConfig, g, x: np.ndarray, ops: GraphOperators | None = None) -> TrainResult:
    """Full-graph training for ``cfg.epochs`` epochs.

    Every epoch refits the decoder filters, so they track the current
    estimates. The returned embedding is the encoder output without noise.
    """
    ops = ops if ops is not None else _as_operators(g, cfg.spectral_mode == "exact")
    exact = cfg.spectral_mode == "exact"
    conv = precompute_propagation(ops, cfg.kernel, cfg.remez_order, exact=exact)
    p = init_params(cfg)
    st = AdamState.for_params(p)
    rng = SeededRng(derive_seed(cfg.seed, "augment"))
    history: list[float] = []
    for epoch in range(cfg.epochs):
        try:
            out, cache = forward(p, conv, ops, x, cfg, rng)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}", history) from exc
        value = loss(x, out)
        if not np.isfinite(value):
            raise TrainingDiverged(f"epoch {epoch}: loss is {value}", history)
        history.append(value)
        grads = backward(cache, x, cfg, p, conv)
        adam_step(p, grads, st, cfg.lr, cfg.adam_betas, cfg.adam_eps)
    embedding, _ = encode(p, conv, x, cfg)
    return TrainResult(params=p, history=history, embedding=embedding, adam=st)


def readout(h: np.ndarray, kind: str = "max") -> np.ndarray:
    """Column-wise pooling of node embeddings into one graph vector."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if h.shape[0] == 0:
        raise ValueError("cannot pool an empty embedding matrix")
    if kind == "max":
        return h.max(axis=0)
    if kind == "avg":
        return h.mean(axis=0)
    if kind == "sum":
        return h.sum(axis=0)
    raise ValueError(f"readout must be one of {READOUTS}")


# ---------------------------------------------------------------------------
# gradient check


def gradient_check(cfg: ModelConfig, ops: GraphOperators, x: np.ndarray, step: float = 1e-5) -> list[float]:
    """Compare analytic gradients with central differences on a frozen pass.

    The noise and fitted filters of one forward pass are replayed, so the
    loss is the same stop-gradient surrogate that backward differentiates.
    Returns, per parameter array (in ``Params.arrays()`` order), the
    relative error ``||a - n|| / max(||a||, ||n||)`` (0 when both vanish).
    """
    exact = cfg.spectral_mode == "exact"
    conv = precompute_propagation(ops, cfg.kernel, cfg.remez_order, exact=exact)
    p = init_params(cfg)
    rng = SeededRng(derive_seed(cfg.seed, "augment"))
    _, cache = forward(p, conv, ops, x, cfg, rng)
    analytic = backward(cache, x, cfg, p, conv)
    base = _kink_pattern(cache)

    def probe(w, idx, delta):
        w[idx] += delta
        out, c = forward(p, conv, ops, x, cfg, replay=cache)
        return loss(x, out), _kink_pattern(c)

    errors = []
    for w, gw in zip(p.arrays(), analytic.arrays()):
        numeric = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            # a difference straddling a PReLU or max kink is meaningless;
            # shrink the step until both sides stay on the base piece
            h = step
            for _ in range(4):
                up, kup = probe(w, idx, h)
                w[idx] = orig
                down, kdown = probe(w, idx, -h)
                w[idx] = orig
                if kup == base and kdown == base:
                    break
                h /= 10
            numeric[idx] = (up - down) / (2 * h)
        scale = max(np.linalg.norm(gw), np.linalg.norm(numeric))
        errors.append(float(np.linalg.norm(gw - numeric) / scale) if scale > 0 else 0.0)
    return errors


def _kink_pattern(cache: ForwardCache) -> bytes:
    """Signs of every activated pre-activation and the max-aggregation winners."""
    parts = [layer.pre > 0 for layer in cache.encoder if layer.activated]
    for streams in cache.decoder:
        for r in streams.values():
            parts += [y > 0 for y in r.pres]
            if r.winner is not None:
                parts.append(r.winner)
    return b"".join(np.ascontiguousarray(a).tobytes() for a in parts)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, cfg: ModelConfig, p: Params, adam: AdamState | None = None) -> None:
    doc = {
        "config": cfg.to_dict(),
        "weights": {
            "encoder": [w.tolist() for w in p.encoder],
            "decoder": [[w.tolist() for w in layer] for layer in p.decoder],
        },
        "prelu_slopes": {
            "encoder": p.encoder_slopes.tolist(),
            "decoder": p.decoder_slopes.tolist(),
        },
    }
    if adam is not None:
        doc["adam"] = {
            "step": adam.step,
            "m": [a.tolist() for a in adam.m],
            "v": [a.tolist() for a in adam.v],
        }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path) -> tuple[ModelConfig, Params, AdamState | None]:
    doc = json.loads(Path(path).read_text())
    cfg = ModelConfig.from_dict(doc["config"])
    m, q = cfg.num_layers, cfg.channels
    p = Params(
        encoder=[np.array(w, dtype=np.float64) for w in doc["weights"]["encoder"]],
        decoder=[[np.array(w, dtype=np.float64) for w in layer] for layer in doc["weights"]["decoder"]],
        encoder_slopes=np.array(doc["prelu_slopes"]["encoder"], dtype=np.float64),
        decoder_slopes=np.array(doc["prelu_slopes"]["decoder"], dtype=np.float64).reshape(m - 1, q),
    )
    adam = None
    if "adam" in doc:
        a = doc["adam"]
        adam = AdamState(
            m=[np.array(v, dtype=np.float64) for v in a["m"]],
            v=[np.array(v, dtype=np.float64) for v in a["v"]],
            step=int(a["step"]),
        )
        for arr, ref in zip(adam.m + adam.v, p.arrays() * 2):
            arr.shape = ref.shape
    return cfg, p, adam
