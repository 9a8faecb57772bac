"""Command-line interface: ``graph-wiener {train,verify,remez-fit,sweep,probe}``.

Commands read a JSON config, validated against a schema before any work
and rejecting unknown keys. ``--seed`` and ``--out`` override the config.
Exit codes: 0 success, 1 a check or proposition failed, 2 usage, IO or
schema error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import io
from .autoencoder import ModelConfig, TrainingDiverged, save_checkpoint, train
from .datasets import community_features, gaussian_features, generate_sbm, karate_graph
from .evaluation import (
    monte_carlo_reconstruction,
    stability_sweep,
    verify_prop1,
    verify_prop2,
    verify_prop3,
    write_report_csv,
    write_sweep_csv,
)
from .graph import normalized_laplacian
from .kernels import KERNELS, KernelSpec, eval_conv, eval_inverse, wiener_gain
from .linalg import SeededRng, derive_seed, eigh_symmetric, gaussian_matrix
from .probe import logistic_probe
from .remez import MAX_DEGREE, apply_matrix_polynomial, grid_error, remez_fit

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_KERNEL = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(KERNELS)},
        "t": {"type": "number", "exclusiveMinimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "additionalProperties": False,
}
_FEATURES = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["gaussian", "identity", "community"]},
        "dim": {"type": "integer", "minimum": 1},
        "signal": {"type": "number", "minimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_DATASET = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"source": {"const": "karate"}, "features": _FEATURES},
            "required": ["source"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "source": {"const": "sbm"},
                "block_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "p_in": {"type": "number", "minimum": 0, "maximum": 1},
                "p_out": {"type": "number", "minimum": 0, "maximum": 1},
                "features": _FEATURES,
            },
            "required": ["source", "block_sizes", "p_in", "p_out"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "source": {"const": "files"},
                "edges": {"type": "string"},
                "features": {"type": "string"},
                "labels": {"type": "string"},
            },
            "required": ["source", "edges", "features"],
            "additionalProperties": False,
        },
    ]
}
_MODEL = {
    "type": "object",
    "properties": {
        "hidden_dim": {"type": "integer", "minimum": 1},
        "num_layers": {"type": "integer", "minimum": 1},
        "kernel": _KERNEL,
        "channels": {"type": "integer", "minimum": 1},
        "gammas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "beta": {"type": "number", "minimum": 0},
        "remez_order": {"type": "integer", "minimum": 0, "maximum": MAX_DEGREE},
        "agg": {"enum": ["sum", "avg", "max"]},
        "last_activation": {"type": "boolean"},
        "skip_connection": {"type": "boolean"},
        "decoder_mode": {"enum": ["wiener", "inverse"]},
        "augment": {"type": "boolean"},
        "spectral_mode": {"enum": ["remez", "exact"]},
        "inverse_clamp": {"type": "number", "exclusiveMinimum": 0},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "adam_betas": {"type": "array", "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}, "minItems": 2, "maxItems": 2},
        "adam_eps": {"type": "number", "exclusiveMinimum": 0},
        "epochs": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

TRAIN_SCHEMA = {
    "type": "object",
    "properties": {"dataset": _DATASET, "model": _MODEL, "out": {"type": "string"}, "seed": _SEED},
    "required": ["dataset"],
    "additionalProperties": False,
}
SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "dataset": _DATASET,
        "model": _MODEL,
        "betas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "modes": {"type": "array", "items": {"enum": ["wiener", "inverse"]}, "minItems": 1, "uniqueItems": True},
        "probe_trials": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "seed": _SEED,
    },
    "required": ["dataset", "betas"],
    "additionalProperties": False,
}
VERIFY_SCHEMA = {
    "type": "object",
    "properties": {
        "instances": {"type": "integer", "minimum": 1},
        "spectrum_size": {"type": "integer", "minimum": 1},
        "gamma1": {"type": "number", "exclusiveMinimum": 0},
        "gamma2": {"type": "number", "exclusiveMinimum": 0},
        "mc_nodes": {"type": "integer", "minimum": 2},
        "mc_sigma": {"type": "number", "minimum": 0},
        "mc_trials": {"type": "integer", "minimum": 1},
        "mc_tolerance": {"type": "number", "minimum": 0},
        "remez_graphs": {"type": "integer", "minimum": 0},
        "remez_nodes": {"type": "integer", "minimum": 2},
        "remez_tolerance": {"type": "number", "minimum": 0},
        "out": {"type": "string"},
        "seed": _SEED,
    },
    "additionalProperties": False,
}
REMEZ_SCHEMA = {
    "type": "object",
    "properties": {
        "kernel": _KERNEL,
        "order": {"type": "integer", "minimum": 0},
        "filter": {"enum": ["conv", "inverse", "wiener"]},
        "gamma": {"type": "number", "exclusiveMinimum": 0},
        "sigma2": {"type": "number", "minimum": 0},
        "avg_energy": {"type": "number", "exclusiveMinimum": 0},
        "grid": {"type": "integer", "minimum": 2},
        "out": {"type": "string"},
    },
    "additionalProperties": False,
}

VERIFY_DEFAULTS = {
    "instances": 20,
    "spectrum_size": 12,
    "gamma1": 1.0,
    "gamma2": 10.0,
    "mc_nodes": 20,
    "mc_sigma": 0.3,
    "mc_trials": 10000,
    "mc_tolerance": 0.05,
    "remez_graphs": 5,
    "remez_nodes": 60,
    "remez_tolerance": 1e-8,
    "seed": 0,
}


class UsageError(Exception):
    """Bad config, missing file or invalid argument (exit code 2)."""


def _load_config(path, schema) -> dict:
    if path is None:
        doc = {}
    else:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"config schema error at {where}: {exc.message}") from exc
    return doc


def _apply_overrides(doc: dict, args) -> dict:
    doc = dict(doc)
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        doc["out"] = args.out
    return doc


def _out_dir(doc: dict) -> Path:
    out = Path(doc.get("out", "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    return out


def load_dataset(spec: dict, seed: int):
    """Graph, features and labels (or None) described by a dataset block."""
    source = spec["source"]
    if source == "files":
        try:
            x = io.read_features(spec["features"])
            g = io.read_edge_list(spec["edges"], num_nodes=x.shape[0])
            labels = io.read_labels(spec["labels"]) if "labels" in spec else None
        except OSError as exc:
            raise UsageError(str(exc)) from exc
        except ValueError as exc:
            raise UsageError(f"bad input file: {exc}") from exc
        if labels is not None and len(labels) != g.num_nodes:
            raise UsageError(f"{len(labels)} labels for {g.num_nodes} nodes")
        return g, x, labels
    if source == "karate":
        g, labels = karate_graph()
        default = {"kind": "gaussian", "dim": 4}
    else:
        try:
            g, labels = generate_sbm(spec["block_sizes"], spec["p_in"], spec["p_out"], seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        default = {"kind": "community", "dim": 16, "signal": 6.0}
    feat = spec.get("features", default)
    kind = feat["kind"]
    if kind == "identity":
        x = np.eye(g.num_nodes)
    elif kind == "gaussian":
        x = gaussian_features(g.num_nodes, feat.get("dim", 4), seed)
    else:
        x = community_features(labels, feat.get("dim", 16), feat.get("signal", 6.0), seed)
    return g, x, labels


def _model_config(doc: dict, input_dim: int) -> ModelConfig:
    try:
        return ModelConfig(input_dim=input_dim, seed=doc.get("seed", 0), **doc.get("model", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid model config: {exc}") from exc


def cmd_train(args) -> int:
    doc = _apply_overrides(_load_config(args.config, TRAIN_SCHEMA), args)
    seed = doc.get("seed", 0)
    g, x, _ = load_dataset(doc["dataset"], seed)
    cfg = _model_config(doc, x.shape[1])
    out = _out_dir(doc)
    try:
        result = train(cfg, g, x)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    save_checkpoint(out / "checkpoint.json", cfg, result.params, result.adam)
    io.write_matrix_csv(out / "embeddings.csv", result.embedding)
    io.write_rows_csv(
        out / "history.csv",
        [{"epoch": i + 1, "loss": v} for i, v in enumerate(result.history)],
        ["epoch", "loss"],
    )
    final = result.history[-1] if result.history else float("nan")
    print(f"final loss {final:.6g} after {len(result.history)} epochs")
    return EXIT_OK


def _random_instance(rng: SeededRng, size: int):
    """Eigenvalue set, energies and noise level for one proposition check."""
    kind = KERNELS[int(rng.next_u64(1)[0] % len(KERNELS))]
    lam = np.sort(2.0 * rng.uniform(size))
    energies = 0.05 + 2.0 * rng.uniform(size)
    sigma2 = float(0.5 * rng.uniform(1)[0])
    return KernelSpec(kind), lam, energies, sigma2


def run_verification(cfg: dict) -> tuple[list, list[dict]]:
    """Run the proposition suite and the polynomial-vs-exact oracle.

    Returns the spectral reports and one summary row per check.
    """
    seed = cfg["seed"]
    rng = SeededRng(derive_seed(seed, "verify"))
    reports, checks = [], []

    def record(name, passed, value, threshold):
        checks.append({"check": name, "passed": int(bool(passed)), "value": value, "threshold": threshold})

    for i in range(cfg["instances"]):
        k, lam, energies, sigma2 = _random_instance(rng, cfg["spectrum_size"])
        r1 = verify_prop1(k, lam, sigma2)
        r2 = verify_prop2(k, lam, energies, sigma2)
        r3 = verify_prop3(k, lam, energies, sigma2, cfg["gamma1"], cfg["gamma2"])
        for r in (r1, r2, r3):
            r.name = f"{r.name}[{i}:{k.kind}]"
        reports += [r1, r2, r3]
        record(r1.name, r1.passed, r1.mse["inverse"], "")
        record(r2.name, r2.passed, r2.extra["mse_wiener"], r2.extra["mse_inverse"])
        record(r3.name, r3.passed, r3.extra["violations"], 0)

    g, _ = generate_sbm([cfg["mc_nodes"] // 2, cfg["mc_nodes"] - cfg["mc_nodes"] // 2], 0.5, 0.1, seed)
    ed = eigh_symmetric(normalized_laplacian(g).to_dense())
    heat = KernelSpec("heat")
    mc = {
        mode: monte_carlo_reconstruction(g, heat, mode, cfg["mc_sigma"], cfg["mc_trials"], seed, eigen=ed)
        for mode in ("inverse", "wiener")
    }
    for mode, res in mc.items():
        rel = abs(res.empirical - res.analytic) / res.analytic if res.analytic > 0 else abs(res.empirical)
        record(f"monte_carlo_{mode}", rel <= cfg["mc_tolerance"], rel, cfg["mc_tolerance"])
    paired = mc["wiener"].empirical < mc["inverse"].empirical or cfg["mc_sigma"] == 0
    record("monte_carlo_paired", paired, mc["wiener"].empirical, mc["inverse"].empirical)

    for i in range(cfg["remez_graphs"]):
        n = cfg["remez_nodes"]
        g, _ = generate_sbm([n // 2, n - n // 2], 0.3, 0.05, derive_seed(seed, f"remez-{i}"))
        lap = normalized_laplacian(g)
        ed = eigh_symmetric(lap.to_dense())
        x = gaussian_matrix(SeededRng(derive_seed(seed, f"remez-x-{i}")), n, 3)
        for kind in KERNELS:
            k = KernelSpec(kind)
            order = 9 if kind == "gcn" else 2
            p = remez_fit(lambda t: eval_conv(k, t), order)
            approx = apply_matrix_polynomial(lap, p, x)
            exact = ed.apply(p, x)
            rel = float(np.linalg.norm(approx - exact) / np.linalg.norm(exact))
            record(f"remez_vs_exact[{i}:{kind}]", rel <= cfg["remez_tolerance"], rel, cfg["remez_tolerance"])
    return reports, checks


def cmd_verify(args) -> int:
    doc = _apply_overrides(_load_config(args.config, VERIFY_SCHEMA), args)
    cfg = {**VERIFY_DEFAULTS, **doc}
    out = _out_dir(doc)
    reports, checks = run_verification(cfg)
    write_report_csv(out / "verify_report.csv", reports)
    io.write_rows_csv(out / "verify_checks.csv", checks, ["check", "passed", "value", "threshold"])
    failed = [c["check"] for c in checks if not c["passed"]]
    skipped = sum(int(np.sum(r.skipped)) for r in reports if r.skipped is not None)
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed; {skipped} spectra skipped by precondition")
    for name in failed:
        print(f"FAILED {name}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def _remez_target(doc: dict):
    k = KernelSpec(**doc.get("kernel", {}))
    kind = doc.get("filter", "conv")
    if kind == "conv":
        return k, kind, lambda t: eval_conv(k, t)
    if kind == "inverse":
        return k, kind, lambda t: eval_inverse(k, t)
    aer = doc.get("sigma2", 0.1) / (doc.get("gamma", 1.0) * doc.get("avg_energy", 1.0))
    return k, kind, lambda t: wiener_gain(eval_conv(k, t), aer)


def cmd_remez(args) -> int:
    doc = _load_config(args.config, REMEZ_SCHEMA)
    flags = {
        "order": args.order,
        "filter": args.filter,
        "gamma": args.gamma,
        "sigma2": args.sigma2,
        "avg_energy": args.avg_energy,
        "grid": args.grid,
        "out": args.out,
    }
    doc.update({k: v for k, v in flags.items() if v is not None})
    if args.kernel is not None:
        doc["kernel"] = {**doc.get("kernel", {}), "kind": args.kernel}
    try:
        jsonschema.validate(doc, REMEZ_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise UsageError(f"invalid remez-fit arguments: {exc.message}") from exc
    k, kind, f = _remez_target(doc)
    order = doc.get("order", 9 if k.kind == "gcn" else 2)
    if order > MAX_DEGREE:
        raise UsageError(f"order {order} exceeds the cap of {MAX_DEGREE}")
    points = doc.get("grid", 1001)
    p = remez_fit(f, order)
    out = _out_dir(doc)
    io.write_rows_csv(out / "coefficients.csv", [{"k": i, "coefficient": c} for i, c in enumerate(p.coeffs)], ["k", "coefficient"])
    t = np.linspace(0.0, 2.0, points)
    target, fit = np.asarray(f(t)) * np.ones_like(t), p(t)
    io.write_rows_csv(
        out / "grid.csv",
        [{"lam": a, "target": b, "fit": c, "error": b - c} for a, b, c in zip(t, target, fit)],
        ["lam", "target", "fit", "error"],
    )
    summary = {
        "kernel": k.kind,
        "filter": kind,
        "order": order,
        "leveled_error": p.leveled_error,
        "grid_error": grid_error(f, p, points),
    }
    io.write_rows_csv(out / "summary.csv", [summary], list(summary))
    print(f"{k.kind} {kind} K={order}: leveled error {p.leveled_error:.3e}, grid error {summary['grid_error']:.3e}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = _apply_overrides(_load_config(args.config, SWEEP_SCHEMA), args)
    seed = doc.get("seed", 0)
    g, x, labels = load_dataset(doc["dataset"], seed)
    cfg = _model_config(doc, x.shape[1])
    out = _out_dir(doc)
    try:
        rows = stability_sweep(
            cfg, doc["betas"], g, x, labels, modes=tuple(doc.get("modes", ("wiener", "inverse"))),
            probe_trials=doc.get("probe_trials", 5),
        )
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_sweep_csv(out / "sweep.csv", rows)
    for r in rows:
        print(f"beta={r['beta']:g} {r['decoder_mode']}: final loss {r['final_loss']:.6g}")
    return EXIT_OK


def cmd_probe(args) -> int:
    try:
        emb = io.read_features(args.embeddings)
        labels = io.read_labels(args.labels)
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(f"bad input file: {exc}") from exc
    if len(labels) != emb.shape[0]:
        raise UsageError(f"{len(labels)} labels for {emb.shape[0]} embeddings")
    try:
        res = logistic_probe(emb, labels, seed=args.seed if args.seed is not None else 0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.out is not None:
        out = _out_dir({"out": args.out})
        rows = [{"class": c, "test_size": n, "correct": k} for c, (n, k) in sorted(res.class_counts.items())]
        io.write_rows_csv(out / "probe.csv", rows, ["class", "test_size", "correct"])
    print(f"accuracy {res.accuracy:.4f} (validation {res.val_accuracy:.4f}, epoch {res.best_epoch})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graph-wiener", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--seed", type=int, help="seed overriding the config")
        p.add_argument("--out", help="output directory overriding the config")

    common(sub.add_parser("train", help="train an autoencoder and export embeddings"), True)
    common(sub.add_parser("verify", help="numerical checks of the filter error bounds"), False)
    common(sub.add_parser("sweep", help="final loss across augmentation magnitudes"), True)

    r = sub.add_parser("remez-fit", help="fit a filter polynomial and tabulate its error")
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--kernel", choices=KERNELS)
    r.add_argument("--order", type=int, help=f"polynomial degree K (at most {MAX_DEGREE})")
    r.add_argument("--filter", choices=["conv", "inverse", "wiener"])
    r.add_argument("--gamma", type=float)
    r.add_argument("--sigma2", type=float)
    r.add_argument("--avg-energy", type=float)
    r.add_argument("--grid", type=int, help="grid points for the error table")
    r.add_argument("--out")

    p = sub.add_parser("probe", help="logistic-regression probe on saved embeddings")
    p.add_argument("--embeddings", required=True, help="embeddings CSV")
    p.add_argument("--labels", required=True, help="label file, one integer per line")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    return parser


COMMANDS = {"train": cmd_train, "verify": cmd_verify, "remez-fit": cmd_remez, "sweep": cmd_sweep, "probe": cmd_probe}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
