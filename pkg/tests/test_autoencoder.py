import json

import numpy as np
import pytest

from graph_wiener.autoencoder import (
    AdamState,
    ModelConfig,
    Params,
    adam_step,
    augment,
    backward,
    backward_from,
    decode,
    encode,
    forward,
    gradient_check,
    init_params,
    load_checkpoint,
    loss,
    precompute_propagation,
    prepare_graph,
    readout,
    save_checkpoint,
    skip_forward,
    train,
)
from graph_wiener.datasets import gaussian_features, generate_sbm, karate_graph
from graph_wiener.graph import build_graph
from graph_wiener.kernels import KernelSpec, eval_conv, eval_inverse
from graph_wiener.linalg import SeededRng, derive_seed, gaussian_matrix
from graph_wiener.remez import grid_error, remez_fit


class Identity:
    def apply(self, x):
        return x


def small_problem(seed=0, n=12, d=3):
    g, _ = generate_sbm([n // 2, n - n // 2], 0.6, 0.15, seed)
    x = gaussian_features(n, d, seed)
    return g, x


def identity_params(cfg):
    """Identity weights and unit slopes (PReLU becomes the identity)."""
    m, d, q = cfg.num_layers, cfg.input_dim, cfg.channels
    assert d == cfg.hidden_dim
    return Params(
        encoder=[np.eye(d) for _ in range(m)],
        decoder=[[np.eye(d) for _ in range(q)] for _ in range(m)],
        encoder_slopes=np.ones(m),
        decoder_slopes=np.ones((m - 1, q)),
    )


# config -------------------------------------------------------------------


def test_config_defaults_and_validation():
    cfg = ModelConfig(input_dim=5)
    assert cfg.channels == 3 and cfg.gammas == (0.1, 1.0, 10.0)
    assert cfg.remez_order == 2 and cfg.lr == 0.001
    assert ModelConfig(input_dim=5, kernel=KernelSpec("gcn")).remez_order == 9
    assert ModelConfig(input_dim=5, kernel={"kind": "ppr"}).kernel == KernelSpec("ppr")
    for bad in (
        dict(num_layers=0),
        dict(channels=2),
        dict(gammas=(1.0, -1.0, 2.0)),
        dict(beta=-0.1),
        dict(remez_order=17),
        dict(agg="median"),
        dict(decoder_mode="pseudo"),
        dict(spectral_mode="lanczos"),
        dict(epochs=-1),
    ):
        with pytest.raises(ValueError):
            ModelConfig(input_dim=5, **bad)


def test_config_round_trip():
    cfg = ModelConfig(input_dim=4, kernel=KernelSpec("ppr", alpha=0.3), gammas=(1.0, 2.0), channels=2)
    again = ModelConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_param_shapes():
    cfg = ModelConfig(input_dim=5, hidden_dim=7, num_layers=3, channels=2, gammas=(1, 2))
    p = init_params(cfg)
    assert [w.shape for w in p.encoder] == [(5, 7), (7, 7), (7, 7)]
    assert [[w.shape for w in layer] for layer in p.decoder] == [[(7, 7)] * 2, [(7, 7)] * 2, [(7, 5)] * 2]
    assert np.all(p.encoder_slopes == 0.25) and p.decoder_slopes.shape == (2, 2)
    s = np.sqrt(6 / 12)
    assert np.all(np.abs(p.encoder[0]) <= s)


# propagation --------------------------------------------------------------


def test_gcn_propagation_on_k2():
    conv = precompute_propagation(build_graph([(0, 1)], 2), KernelSpec("gcn"), 9)
    assert np.allclose(conv.apply(np.array([[1.0], [0.0]])), [[0.0], [1.0]])


def test_heat_propagation_within_grid_error():
    g, _ = small_problem(1)
    ops = prepare_graph(g, exact=True)
    k = KernelSpec("heat")
    conv = precompute_propagation(ops, k, 2)
    x = np.random.default_rng(0).normal(size=(12, 2))
    exact = ops.eigen.apply(lambda t: eval_conv(k, t), x)
    bound = grid_error(lambda t: eval_conv(k, t), remez_fit(lambda t: eval_conv(k, t), 2))
    assert np.linalg.norm(conv.apply(x) - exact) <= 1.01 * bound * np.linalg.norm(x)


def test_ppr_keeps_constant_on_regular_graph():
    cycle = build_graph([(i, (i + 1) % 8) for i in range(8)], 8)
    x = np.full((8, 1), 2.5)
    exact = precompute_propagation(prepare_graph(cycle, exact=True), KernelSpec("ppr"), 2, exact=True)
    assert np.allclose(exact.apply(x), x, atol=1e-6)
    # the degree-2 fit carries its own error at lam = 0
    poly = precompute_propagation(cycle, KernelSpec("ppr"), 2)
    p0 = poly.poly(0.0)
    assert np.allclose(poly.apply(x), p0 * x, atol=1e-12)


def test_exact_mode_needs_eigen():
    g, _ = small_problem()
    with pytest.raises(ValueError):
        precompute_propagation(prepare_graph(g), KernelSpec("heat"), 2, exact=True)


# encoder and augmentation -------------------------------------------------


def test_encode_identity_network():
    x = np.random.default_rng(0).normal(size=(6, 3))
    cfg = ModelConfig(input_dim=3, hidden_dim=3, num_layers=1, channels=1, gammas=(1.0,))
    h, _ = encode(identity_params(cfg), Identity(), x, cfg)
    assert np.array_equal(h, x)


def test_encode_zero_weights_and_shape_check():
    g, x = small_problem()
    cfg = ModelConfig(input_dim=3, hidden_dim=4)
    p = init_params(cfg)
    for w in p.encoder:
        w[:] = 0.0
    conv = precompute_propagation(g, cfg.kernel, cfg.remez_order)
    h, _ = encode(p, conv, x, cfg)
    assert np.all(h == 0)
    with pytest.raises(ValueError):
        encode(p, conv, np.ones((12, 5)), cfg)


def test_encode_reports_non_finite():
    g, x = small_problem()
    cfg = ModelConfig(input_dim=3, hidden_dim=4)
    p = init_params(cfg)
    p.encoder[0][0, 0] = np.inf
    with pytest.raises(FloatingPointError, match="encoder layer 0"):
        encode(p, precompute_propagation(g, cfg.kernel, 2), x, cfg)


def test_encode_deterministic_on_karate():
    g, _ = karate_graph()
    x = gaussian_features(34, 4, 1)
    cfg = ModelConfig(input_dim=4, seed=1)
    conv = precompute_propagation(g, cfg.kernel, cfg.remez_order)
    a, _ = encode(init_params(cfg), conv, x, cfg)
    b, _ = encode(init_params(cfg), conv, x, cfg)
    assert a.tobytes() == b.tobytes()


def test_augment():
    h = np.random.default_rng(0).normal(size=(20, 5))
    assert np.array_equal(augment(h, 0.0, SeededRng(1)), h)
    const = np.full((4, 3), 7.0)
    assert np.array_equal(augment(const, 2.0, SeededRng(1)), const)
    big = 3.0 * np.random.default_rng(1).normal(size=(400, 250)) + 1.0
    diff = augment(big, 1.0, SeededRng(2)) - big
    assert abs(diff.var() / big.var() - 1.0) <= 0.05
    with pytest.raises(ValueError):
        augment(h, -1.0, SeededRng(0))


# decoder ------------------------------------------------------------------


def test_decode_constant_rows_reconstruct():
    cycle = build_graph([(i, (i + 1) % 10) for i in range(10)], 10)
    ops = prepare_graph(cycle, exact=True)
    cfg = ModelConfig(
        input_dim=2, hidden_dim=2, num_layers=1, channels=1, gammas=(1.0,), spectral_mode="exact", augment=False
    )
    x = np.tile([1.5, -0.5], (10, 1))
    p = identity_params(cfg)
    conv = precompute_propagation(ops, cfg.kernel, 2, exact=True)
    out, cache = forward(p, conv, ops, x, cfg)
    assert cache.estimates[0]["d"][0] == pytest.approx(0.0, abs=1e-20)
    assert np.allclose(out, x, atol=1e-4)


@pytest.mark.parametrize("kind", ["heat", "ppr"])
def test_inverse_decoder_undoes_encoder(kind):
    g, x = small_problem(3)
    ops = prepare_graph(g, exact=True)
    base = dict(input_dim=3, hidden_dim=3, num_layers=2, channels=1, gammas=(1.0,), kernel=KernelSpec(kind))
    base.update(decoder_mode="inverse", beta=0.0, augment=False)
    # exact spectral filters: identity to rounding
    cfg = ModelConfig(spectral_mode="exact", **base)
    conv = precompute_propagation(ops, cfg.kernel, 2, exact=True)
    out, _ = forward(identity_params(cfg), conv, ops, x, cfg)
    assert np.allclose(out, x, atol=1e-8)
    # fitted polynomials: bounded by the grid error of the composed filters
    cfg = ModelConfig(**base)
    k = cfg.kernel
    pc = remez_fit(lambda t: eval_conv(k, t), 2)
    pd = remez_fit(lambda t: eval_inverse(k, t), 2)
    t = np.linspace(0, 2, 2001)
    bound = np.max(np.abs(pd(t) * pc(t) - 1.0))
    conv = precompute_propagation(ops, k, 2)
    out, _ = forward(identity_params(cfg), conv, ops, x, cfg)
    # two layers: each round trip contributes at most (1 + bound)
    assert np.linalg.norm(out - x) <= ((1 + bound) ** 2 - 1) * np.linalg.norm(x) * 1.01


@pytest.mark.parametrize("agg", ["sum", "avg", "max"])
def test_identical_channels(agg):
    g, x = small_problem(2)
    ops = prepare_graph(g)
    one = ModelConfig(input_dim=3, hidden_dim=4, channels=1, gammas=(1.0,), agg=agg, seed=3)
    many = ModelConfig(input_dim=3, hidden_dim=4, channels=3, gammas=(1.0, 1.0, 1.0), agg=agg, seed=3)
    p1 = init_params(one)
    pm = init_params(many)
    pm.encoder = [w.copy() for w in p1.encoder]
    pm.decoder = [[layer[0].copy() for _ in range(3)] for layer in p1.decoder]
    pm.decoder_slopes = np.repeat(p1.decoder_slopes, 3, axis=1)
    conv = precompute_propagation(ops, one.kernel, 2)
    h, _ = encode(p1, conv, x, one)
    a, _ = decode(p1, ops, h, one)
    b, _ = decode(pm, ops, h, many)
    # the gain is scale invariant and PReLU homogeneous, so sums compound per layer
    scale = 3.0**one.num_layers if agg == "sum" else 1.0
    assert np.allclose(b, scale * a, atol=1e-12)


def test_wiener_output_varies_less_than_inverse():
    g, x = small_problem(4, n=16)
    ops = prepare_graph(g)
    outs = {}
    for mode in ("wiener", "inverse"):
        cfg = ModelConfig(input_dim=3, hidden_dim=4, num_layers=1, beta=1.0, decoder_mode=mode, seed=2)
        p = init_params(cfg)
        conv = precompute_propagation(ops, cfg.kernel, 2)
        rng = SeededRng(99)
        outs[mode] = np.stack([forward(p, conv, ops, x, cfg, rng)[0] for _ in range(200)])
    assert outs["wiener"].var(axis=0).sum() < outs["inverse"].var(axis=0).sum()


def test_skip_streams():
    g, x = small_problem(5)
    ops = prepare_graph(g)
    cfg = ModelConfig(input_dim=3, hidden_dim=4, beta=0.0, skip_connection=True, seed=1)
    p = init_params(cfg)
    conv = precompute_propagation(ops, cfg.kernel, 2)
    h, _ = encode(p, conv, x, cfg)
    plain, layers = decode(p, ops, h, cfg)
    same, _ = decode(p, ops, h, cfg, skip_inputs={1: layers[1]["d"].inp})
    assert np.allclose(same, plain, atol=1e-13)
    a, _ = skip_forward(p, conv, ops, x, replace_beta(cfg, 0.5), SeededRng(4))
    b, _ = skip_forward(p, conv, ops, x, replace_beta(cfg, 0.5), SeededRng(4))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        skip_forward(p, conv, ops, x, ModelConfig(input_dim=3, hidden_dim=4), SeededRng(0))


def replace_beta(cfg, beta):
    d = cfg.to_dict()
    d["beta"] = beta
    return ModelConfig.from_dict(d)


def test_skip_changes_training():
    g, _ = karate_graph()
    x = gaussian_features(34, 4, 0)
    base = dict(input_dim=4, epochs=15, beta=0.2, seed=1)
    a = train(ModelConfig(**base), g, x).history
    b = train(ModelConfig(skip_connection=True, **base), g, x).history
    assert a != b


# loss, gradients, optimizer -----------------------------------------------


def test_loss_examples():
    x = np.random.default_rng(0).normal(size=(3, 2))
    assert loss(x, x) == 0.0
    assert loss(np.zeros((4, 3)), np.ones((4, 3))) == pytest.approx(np.sqrt(12))
    assert loss(np.array([[3.0, 4.0], [0, 0]]), np.zeros((2, 2))) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        loss(np.zeros((2, 2)), np.zeros((2, 3)))


def test_zero_loss_gives_zero_gradients():
    g, x = small_problem()
    ops = prepare_graph(g)
    cfg = ModelConfig(input_dim=3, hidden_dim=4)
    p = init_params(cfg)
    conv = precompute_propagation(ops, cfg.kernel, 2)
    out, cache = forward(p, conv, ops, x, cfg, SeededRng(0))
    grads = backward(cache, out, cfg, p, conv)
    assert all(np.all(a == 0) for a in grads.arrays())


def test_backward_linear_in_upstream():
    g, x = small_problem()
    ops = prepare_graph(g)
    cfg = ModelConfig(input_dim=3, hidden_dim=4, skip_connection=True)
    p = init_params(cfg)
    conv = precompute_propagation(ops, cfg.kernel, 2)
    out, cache = forward(p, conv, ops, x, cfg, SeededRng(0))
    d = out - x
    g1 = backward_from(cache, d, p, cfg, conv)
    g2 = backward_from(cache, 2 * d, p, cfg, conv)
    for a, b in zip(g1.arrays(), g2.arrays()):
        assert np.allclose(b, 2 * a, rtol=1e-12, atol=1e-14)


def test_stale_cache_rejected():
    g, x = small_problem()
    ops = prepare_graph(g)
    cfg = ModelConfig(input_dim=3, hidden_dim=4)
    p = init_params(cfg)
    conv = precompute_propagation(ops, cfg.kernel, 2)
    _, cache = forward(p, conv, ops, x, cfg, SeededRng(0))
    grads = backward(cache, x, cfg, p, conv)
    adam_step(p, grads, AdamState.for_params(p))
    with pytest.raises(RuntimeError, match="stale"):
        backward(cache, x, cfg, p, conv)


@pytest.mark.parametrize(
    "overrides",
    [
        dict(),
        dict(kernel=KernelSpec("gcn")),
        dict(kernel=KernelSpec("ppr"), agg="avg"),
        dict(agg="max", last_activation=False),
        dict(skip_connection=True, num_layers=3),
        dict(decoder_mode="inverse", kernel=KernelSpec("gcn")),
        dict(augment=False, spectral_mode="exact"),
    ],
)
def test_gradients_match_finite_differences(overrides):
    g, _ = generate_sbm([4, 4], 0.7, 0.2, 11)
    x = gaussian_matrix(SeededRng(3), 8, 3)
    cfg = ModelConfig(input_dim=3, hidden_dim=4, beta=0.5, seed=5, **overrides)
    ops = prepare_graph(g, exact=cfg.spectral_mode == "exact")
    errors = gradient_check(cfg, ops, x)
    assert max(errors) <= 1e-4, errors


def test_adam_step():
    cfg = ModelConfig(input_dim=3, hidden_dim=4)
    p = init_params(cfg)
    before = [a.copy() for a in p.arrays()]
    st = AdamState.for_params(p)
    adam_step(p, p.zeros_like(), st, lr=0.01)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), before))
    grads = p.zeros_like()
    for a in grads.arrays():
        a[...] = np.linspace(-3, 3, a.size).reshape(a.shape) + 0.01
    q = init_params(cfg)
    adam_step(q, grads, AdamState.for_params(q), lr=0.01)
    for new, old, gr in zip(q.arrays(), before, grads.arrays()):
        assert np.allclose(new - old, -0.01 * np.sign(gr), atol=1e-8)
    assert q.version == 1


def test_adam_deterministic_rebuild():
    g, x = small_problem()
    cfg = ModelConfig(input_dim=3, hidden_dim=4, epochs=2, seed=8)
    a = train(cfg, g, x)
    b = train(cfg, g, x)
    assert all(np.array_equal(u, v) for u, v in zip(a.params.arrays(), b.params.arrays()))


# training -----------------------------------------------------------------


def test_train_zero_epochs():
    g, x = small_problem()
    cfg = ModelConfig(input_dim=3, hidden_dim=4, epochs=0)
    res = train(cfg, g, x)
    assert res.history == []
    assert all(np.array_equal(a, b) for a, b in zip(res.params.arrays(), init_params(cfg).arrays()))


def test_train_deterministic_and_noise_free_embedding():
    g, x = small_problem()
    cfg = ModelConfig(input_dim=3, hidden_dim=4, epochs=5, seed=2)
    a, b = train(cfg, g, x), train(cfg, g, x)
    assert a.history == b.history
    conv = precompute_propagation(g, cfg.kernel, cfg.remez_order)
    h, _ = encode(a.params, conv, x, cfg)
    assert np.array_equal(a.embedding, h)


def test_ablation_variants_by_config():
    g, x = small_problem()
    seen = set()
    for augment in (True, False):
        for mode in ("wiener", "inverse"):
            cfg = ModelConfig(input_dim=3, hidden_dim=4, epochs=3, augment=augment, decoder_mode=mode)
            seen.add(tuple(train(cfg, g, x).history))
    assert len(seen) == 4


def test_karate_training_halves_loss():
    g, _ = karate_graph()
    x = gaussian_features(34, 4, 1)
    cfg = ModelConfig(input_dim=4, hidden_dim=16, num_layers=2, beta=0.2, epochs=200, seed=1)
    hist = train(cfg, g, x).history
    assert hist[-1] < 0.5 * hist[0]


# readout and checkpoints --------------------------------------------------


def test_readout():
    row = np.array([[1.0, -2.0]])
    for kind in ("max", "avg", "sum"):
        assert np.array_equal(readout(row, kind), row[0])
    h = np.array([[1.0, 2.0], [3.0, 0.0]])
    assert np.array_equal(readout(h, "max"), [3, 2])
    assert np.array_equal(readout(h, "avg"), [2, 1])
    assert np.array_equal(readout(h, "sum"), [4, 2])
    with pytest.raises(ValueError):
        readout(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        readout(h, "median")


def test_checkpoint_round_trip(tmp_path):
    g, x = small_problem()
    cfg = ModelConfig(input_dim=3, hidden_dim=4, epochs=3, num_layers=3, channels=2, gammas=(1, 5))
    res = train(cfg, g, x)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, cfg, res.params, res.adam)
    doc = json.loads(path.read_text())
    assert set(doc) == {"config", "weights", "prelu_slopes", "adam"}
    cfg2, p2, adam2 = load_checkpoint(path)
    assert cfg2 == cfg
    assert all(np.array_equal(a, b) for a, b in zip(p2.arrays(), res.params.arrays()))
    assert adam2.step == 3
    assert all(np.array_equal(a, b) for a, b in zip(adam2.m + adam2.v, res.adam.m + res.adam.v))
    save_checkpoint(tmp_path / "plain.json", cfg, res.params)
    assert load_checkpoint(tmp_path / "plain.json")[2] is None


def test_gradient_check_steps_around_kinks():
    # at the default step this instance straddles a PReLU kink in the encoder
    g, _ = generate_sbm([4, 4], 0.7, 0.2, 1)
    x = gaussian_matrix(SeededRng(derive_seed(1, "gc-x")), 8, 3)
    cfg = ModelConfig(input_dim=3, hidden_dim=4, beta=0.5, seed=1)
    assert max(gradient_check(cfg, prepare_graph(g), x)) <= 1e-6
