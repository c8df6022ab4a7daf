"""Command-line harness: dataset generation, training, evaluation, audits.

Subcommands: gen-data, ingest, train, eval, generalize, gradcheck, theorem1,
paramaudit. Each run reads one JSON config file (optional), applies repeatable
``--set dotted.key=value`` overrides, then explicit flags, and writes its
artifacts (report.json plus command-specific CSV, checkpoint, and PNG files)
into the output directory.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
divergence. Log verbosity follows the GRAPHX_LOG environment variable
(error, info, or debug).
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    IngestConfig,
    SyntheticConfig,
    SyntheticMode,
    bundled_dataset_path,
    gen_synthetic,
    ingest_csv,
    load_dataset,
    save_dataset,
)
from .errors import ConfigError, DivergenceError, GraphxError, ValidationError
from .experiments import (
    run_gradcheck,
    run_paramaudit,
    run_theorem1,
)
from .graphs import Episode
from .pipeline import (
    Model,
    ModelConfig,
    config_hash,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .report import (
    canonical_hash,
    render_error_bars,
    render_loss_curve,
    render_pred_scatter,
    write_loss_history_csv,
    write_metrics_csv,
    write_report_json,
)

logger = logging.getLogger("graphx.cli")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

DEFAULT_CONFIG = {
    "dataset": None,
    "checkpoint": None,
    "episode": None,
    "seed": 0,
    "model": {},
    "train": {
        "learning_rate": 1e-3,
        "max_steps": 2000,
        "tol": 1e-6,
        "window": 50,
    },
    "synthetic": {
        "p": 12,
        "n": 32,
        "d": 1,
        "noise_std": 0.05,
        "modes": [
            {"mode_id": "in0", "role": "input", "node_fraction": 0.8, "edge_density": 0.3},
            {"mode_id": "in1", "role": "input", "node_fraction": 0.8, "edge_density": 0.3},
            {"mode_id": "t0", "role": "target", "node_fraction": 0.6, "edge_density": 0.3,
             "scale": 1.2, "shift": 0.2},
            {"mode_id": "t1", "role": "target", "node_fraction": 0.6, "edge_density": 0.3,
             "scale": 0.8, "shift": -0.2},
        ],
    },
    "ingest": {"csv": None, "rho": 0.5, "num_modes": 2, "transpose": False},
    "theorem1": {
        "trials": 10,
        "steps": 400,
        "learning_rate": 5e-3,
        "noise_std": 0.1,
        "p": 10,
        "n": 24,
        "density": 0.2,
    },
    "gradcheck": {"seeds": [0, 1, 2], "threshold": 1e-4},
    "audit": {"mode_counts": [2, 4, 8]},
}


# ---------------------------------------------------------------------------
# Config assembly
# ---------------------------------------------------------------------------


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_set_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(config: dict, pairs: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values parse as JSON when possible."""
    out = copy.deepcopy(config)
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        key, raw = pair.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"--set has an empty key in {pair!r}")
        node = out
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[parts[-1]] = _parse_set_value(raw)
    return out


def parse_episode(text: str) -> dict:
    """Parse ``SRC1,SRC2->TGT1,TGT2`` into an episode mapping."""
    if "->" not in text:
        raise ConfigError(f"episode spec needs '->': {text!r}")
    left, right = text.split("->", 1)
    sources = [s.strip() for s in left.split(",") if s.strip()]
    targets = [t.strip() for t in right.split(",") if t.strip()]
    if not sources or not targets:
        raise ConfigError(f"episode spec needs sources and targets: {text!r}")
    return {"sources": sources, "targets": targets}


def load_run_config(args) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ValidationError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ValidationError("config file must hold a JSON object")
        config = _deep_merge(config, loaded)
    config = apply_overrides(config, args.set or [])
    if args.seed is not None:
        config["seed"] = args.seed
    if getattr(args, "episode", None):
        config["episode"] = parse_episode(args.episode)
    return config


# ---------------------------------------------------------------------------
# Shared run plumbing
# ---------------------------------------------------------------------------


def _resolve_dataset(config: dict) -> Dataset:
    ref = config.get("dataset")
    if not ref:
        raise ValidationError("no dataset configured (set dataset=PATH or bundled:NAME)")
    if isinstance(ref, str) and ref.startswith("bundled:"):
        path = bundled_dataset_path(ref.split(":", 1)[1])
    else:
        path = Path(ref)
    return load_dataset(path)


def _episode_from_config(config: dict, phase: str = "train") -> Episode:
    spec = config.get("episode")
    if not spec:
        raise ValidationError("no episode configured (use --episode SRC->TGT)")
    return Episode(tuple(spec["sources"]), tuple(spec["targets"]), phase=phase)


def _model_config(config: dict, dataset: Dataset) -> ModelConfig:
    overrides = dict(config.get("model") or {})
    overrides.setdefault("meta_dim", dataset.meta_dim)
    overrides.setdefault("d", dataset.d)
    return ModelConfig.from_mapping(overrides)


def _metric_rows(metrics) -> list[dict]:
    rows = []
    for target, tm in sorted(metrics.targets.items()):
        rows.append(
            {
                "target": target,
                "mse": tm.mse,
                "pcc": tm.pcc,
                "pcc_defined": tm.pcc_defined,
                "n_rows": tm.n_rows,
                "mean_generalization_error": float(
                    np.mean(tm.generalization_errors)
                ),
            }
        )
    return rows


def _scatter_arrays(preds) -> tuple[np.ndarray, np.ndarray]:
    pred = np.concatenate([p.pred_at_truth.ravel() for p in preds.values()])
    truth = np.concatenate([p.truth.ravel() for p in preds.values()])
    return pred, truth


def _emit_report(out_dir: Path, command: str, config: dict, results: dict,
                 artifacts: list[str]) -> None:
    report = {
        "command": command,
        "seed": config["seed"],
        "run_config": config,
        "config_hash": canonical_hash(config),
        "results": results,
        "artifacts": sorted(artifacts),
    }
    write_report_json(out_dir / "report.json", report)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    config = load_run_config(args)
    out = _ensure_out(args)
    synth = config["synthetic"]
    modes = tuple(SyntheticMode(**entry) for entry in synth["modes"])
    cfg = SyntheticConfig(
        p=synth["p"], n=synth["n"], d=synth["d"],
        noise_std=synth["noise_std"], modes=modes,
    )
    dataset, truth = gen_synthetic(cfg, seed=config["seed"])
    data_path = out / "dataset.json"
    save_dataset(dataset, data_path)
    results = {
        "dataset_file": data_path.name,
        "universe": len(dataset.universe),
        "modes": list(dataset.mode_ids),
        "samples": dataset.n,
        "scales": truth.scales,
        "shifts": truth.shifts,
    }
    _emit_report(out, "gen-data", config, results, ["dataset.json", "report.json"])
    logger.info("wrote %s", data_path)
    return 0


def cmd_ingest(args) -> int:
    config = load_run_config(args)
    out = _ensure_out(args)
    ing = config["ingest"]
    csv_path = args.csv or ing.get("csv")
    if not csv_path:
        raise ValidationError("ingest needs a CSV path (--csv or ingest.csv)")
    icfg = IngestConfig(
        csv_path=Path(csv_path),
        rho=ing["rho"],
        num_modes=ing["num_modes"],
        transpose=ing["transpose"],
    )
    dataset = ingest_csv(icfg)
    data_path = out / "dataset.json"
    save_dataset(dataset, data_path)
    results = {
        "dataset_file": data_path.name,
        "universe": len(dataset.universe),
        "modes": list(dataset.mode_ids),
        "samples": dataset.n,
    }
    _emit_report(out, "ingest", config, results, ["dataset.json", "report.json"])
    return 0


def _evaluation_block(metrics, loss_report) -> dict:
    return {
        "losses": {
            "attribute": loss_report.attribute_loss,
            "link": loss_report.link_loss,
            "total": loss_report.total,
        },
        "metrics": metrics.to_mapping(),
    }


def cmd_train(args) -> int:
    config = load_run_config(args)
    out = _ensure_out(args)
    dataset = _resolve_dataset(config)
    episode = _episode_from_config(config)
    model_cfg = _model_config(config, dataset)
    tr = config["train"]
    result = train(
        dataset, [episode], model_cfg, seed=config["seed"],
        learning_rate=tr["learning_rate"], max_steps=tr["max_steps"],
        tol=tr["tol"], window=tr["window"],
    )
    artifacts = ["report.json", "metrics.csv", "loss_history.csv", "checkpoint.bin"]
    save_checkpoint(result.model, out / "checkpoint.bin")
    write_loss_history_csv(out / "loss_history.csv", result.history)
    metrics, loss_report, preds = evaluate(result.model, dataset, episode)
    write_metrics_csv(out / "metrics.csv", _metric_rows(metrics))
    if result.history:
        render_loss_curve(out / "loss_curve.png", result.history)
        artifacts.append("loss_curve.png")
    pred, truth = _scatter_arrays(preds)
    render_pred_scatter(out / "pred_vs_truth.png", pred, truth)
    artifacts.append("pred_vs_truth.png")
    results = {
        "model_config_hash": config_hash(model_cfg),
        "steps_run": result.steps_run,
        "converged": result.converged,
        "initial_total": result.history[0].total if result.history else None,
        "final_total": result.history[-1].total if result.history else None,
        "evaluation": _evaluation_block(metrics, loss_report),
    }
    _emit_report(out, "train", config, results, artifacts)
    return 0


def _load_checkpoint_for(config: dict, dataset: Dataset) -> Model:
    ref = config.get("checkpoint")
    if not ref:
        raise ValidationError("no checkpoint configured (set checkpoint=PATH)")
    expected = None
    if config.get("model"):
        expected = _model_config(config, dataset)
    return load_checkpoint(Path(ref), expected_config=expected)


def _run_frozen_eval(args, command: str, phase: str) -> int:
    config = load_run_config(args)
    out = _ensure_out(args)
    dataset = _resolve_dataset(config)
    episode = _episode_from_config(config, phase=phase)
    model = _load_checkpoint_for(config, dataset)
    metrics, loss_report, preds = evaluate(model, dataset, episode)
    write_metrics_csv(out / "metrics.csv", _metric_rows(metrics))
    pred, truth = _scatter_arrays(preds)
    render_pred_scatter(out / "pred_vs_truth.png", pred, truth)
    results = {
        "model_config_hash": config_hash(model.config),
        "checkpoint_seed": model.seed,
        "evaluation": _evaluation_block(metrics, loss_report),
    }
    _emit_report(
        out, command, config, results,
        ["report.json", "metrics.csv", "pred_vs_truth.png"],
    )
    return 0


def cmd_eval(args) -> int:
    return _run_frozen_eval(args, "eval", phase="train")


def cmd_generalize(args) -> int:
    return _run_frozen_eval(args, "generalize", phase="generalize")


def cmd_gradcheck(args) -> int:
    config = load_run_config(args)
    out = _ensure_out(args)
    gc = config["gradcheck"]
    reports = [run_gradcheck(seed=s, threshold=gc["threshold"]) for s in gc["seeds"]]
    rows = [
        {"seed": r.seed, "max_error": r.max_error, "passed": r.passed}
        for r in reports
    ]
    write_metrics_csv(out / "metrics.csv", rows)
    worst = max(r.max_error for r in reports)
    passed = all(r.passed for r in reports)
    results = {
        "checks": [r.to_mapping() for r in reports],
        "max_error": worst,
        "passed": passed,
    }
    _emit_report(out, "gradcheck", config, results, ["report.json", "metrics.csv"])
    print(f"gradcheck max relative error {worst:.3e} ({'pass' if passed else 'FAIL'})")
    return 0 if passed else 1


def cmd_theorem1(args) -> int:
    config = load_run_config(args)
    out = _ensure_out(args)
    th = config["theorem1"]
    report = run_theorem1(
        trials=th["trials"], base_seed=config["seed"], steps=th["steps"],
        learning_rate=th["learning_rate"], noise_std=th["noise_std"],
        p=th["p"], n=th["n"], density=th["density"],
    )
    rows = [
        {
            "trial": t.trial,
            "seed": t.seed,
            "true_error": t.true_error,
            "permuted_error": t.permuted_error,
            "win": t.win,
            "diverged": t.diverged,
        }
        for t in report.trials
    ]
    write_metrics_csv(out / "metrics.csv", rows)
    artifacts = ["report.json", "metrics.csv"]
    valid = [t for t in report.trials if not t.diverged]
    if valid:
        render_error_bars(
            out / "theorem1_errors.png",
            [t.true_error for t in valid],
            [t.permuted_error for t in valid],
        )
        artifacts.append("theorem1_errors.png")
    _emit_report(out, "theorem1", config, report.to_mapping(), artifacts)
    print(
        f"theorem1: {report.wins}/{report.valid_trials} wins, pooled "
        f"{report.pooled_true:.4g} (true) vs {report.pooled_permuted:.4g} (permuted)"
    )
    return 0


def cmd_paramaudit(args) -> int:
    config = load_run_config(args)
    out = _ensure_out(args)
    dataset_counts = tuple(config["audit"]["mode_counts"])
    model_cfg = None
    if config.get("model"):
        overrides = dict(config["model"])
        overrides.setdefault("meta_dim", 4)
        model_cfg = ModelConfig.from_mapping(overrides)
    report = run_paramaudit(model_cfg, mode_counts=dataset_counts, seed=config["seed"])
    rows = [
        {"label": e.label, "mode_count": e.mode_count, "param_count": e.param_count}
        for e in report.entries
    ]
    write_metrics_csv(out / "metrics.csv", rows)
    _emit_report(out, "paramaudit", config, report.to_mapping(),
                 ["report.json", "metrics.csv"])
    for entry in report.entries:
        print(f"{entry.label}: {entry.param_count} trainable parameters")
    if not report.equal:
        print("parameter counts differ between variants")
        return 1
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _ensure_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run-config file")
    common.add_argument("--seed", type=int, default=None, help="run seed")
    common.add_argument("--out", default="runs/latest", help="output directory")
    common.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override a config entry (dotted keys, JSON values); repeatable",
    )
    episodic = argparse.ArgumentParser(add_help=False)
    episodic.add_argument(
        "--episode", metavar="SRC1,SRC2->TGT1,TGT2",
        help="episode as comma-separated source and target mode ids",
    )

    parser = argparse.ArgumentParser(
        prog="graphx",
        description="Graph transformation pipeline with hypernetwork-generated weights.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset") \
        .set_defaults(func=cmd_gen_data)
    ingest = sub.add_parser("ingest", parents=[common],
                            help="build a dataset from a CSV of time series")
    ingest.add_argument("--csv", help="CSV file to ingest")
    ingest.set_defaults(func=cmd_ingest)
    sub.add_parser("train", parents=[common, episodic], help="train on an episode") \
        .set_defaults(func=cmd_train)
    sub.add_parser("eval", parents=[common, episodic],
                   help="evaluate a checkpoint on an episode") \
        .set_defaults(func=cmd_eval)
    sub.add_parser("generalize", parents=[common, episodic],
                   help="frozen-parameter evaluation on an unseen episode") \
        .set_defaults(func=cmd_generalize)
    sub.add_parser("gradcheck", parents=[common],
                   help="finite-difference audit of all gradients") \
        .set_defaults(func=cmd_gradcheck)
    sub.add_parser("theorem1", parents=[common],
                   help="true vs permuted descriptor generalization experiment") \
        .set_defaults(func=cmd_theorem1)
    sub.add_parser("paramaudit", parents=[common],
                   help="check the parameter count is mode-count independent") \
        .set_defaults(func=cmd_paramaudit)
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("GRAPHX_LOG", "").strip().lower()
    level = LOG_LEVELS.get(level_name, logging.WARNING)
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", force=True
    )


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: numerical divergence: {exc}", file=sys.stderr)
        return 2
    except GraphxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
