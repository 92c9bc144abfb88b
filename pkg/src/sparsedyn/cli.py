"""Command-line front end: generate benchmark data, fit models, score reports.

Exit codes: 0 success, 2 configuration/spec errors, 3 data errors,
4 fit errors.  Output files are written to a temporary name and atomically
renamed, so failures never leave partial files behind.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import (
    SCHEMA_VERSION,
    benchmark_from_json,
    config_from_json,
    diff_from_json,
    diff_to_json,
    jsonable,
    library_from_json,
    library_to_json,
)
from .data import load_dataset, save_csv, save_dataset, split_train_test
from .diff import differentiate_dataset
from .errors import DataError, FitError, SpecError
from .library import WeakPDE, evaluate
from .model import FittedModel, equations, fit, predict, score
from .optimize import Coefficients
from .systems import canonical_library, generate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FIT = 4


def _log(verbose: bool, message: str) -> None:
    if verbose:
        print(message, file=sys.stderr)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _dump_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2) + "\n"


def _load_json(path: Path, what: str) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise SpecError(f"{what} not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"{what} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    obj = _load_json(Path(args.config), "benchmark spec")
    spec = benchmark_from_json(obj)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    out = Path(args.out or obj.get("output_dir") or "dataset")
    _log(args.verbose, f"generating {type(spec.system).__name__} dataset -> {out}")

    dataset, truth = generate(spec)
    save_dataset(dataset, out)
    if dataset.grid.n_spatial == 0:
        save_csv(dataset, out / "samples.csv")
    truth_doc = {
        "schema": SCHEMA_VERSION,
        "feature_names": list(truth.names),
        "target_names": [f"q{j}_t" for j in range(dataset.n_states)],
        "coefficients": truth.xi,
        "library": library_to_json(canonical_library(spec.system)),
    }
    _write_atomic(out / "truth.json", _dump_json(truth_doc))
    _log(
        args.verbose,
        f"wrote {dataset.states.shape} states and truth.json",
    )
    print(str(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _resolve_config(args):
    obj = _load_json(Path(args.config), "config")
    if args.diff:
        obj["diff"] = args.diff
    if args.optimizer:
        obj["optimizer"] = args.optimizer
    if args.ensemble:
        obj["ensemble"] = args.ensemble
    cfg = config_from_json(obj)
    if args.seed is not None:
        replacements = {"seed": args.seed}
        if cfg.benchmark is not None:
            replacements["benchmark"] = dataclasses.replace(
                cfg.benchmark, seed=args.seed
            )
        cfg = dataclasses.replace(cfg, **replacements)
    if args.out:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    return cfg


def cmd_fit(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.output_dir)

    if cfg.benchmark is not None:
        _log(args.verbose, "generating benchmark data")
        dataset, _ = generate(cfg.benchmark)
    else:
        _log(args.verbose, f"loading dataset from {cfg.data_path}")
        dataset = load_dataset(cfg.data_path)

    train, test = split_train_test(dataset, cfg.train_fraction)
    _log(
        args.verbose,
        f"train {len(train.grid.time_axis)} / test {len(test.grid.time_axis)} "
        "time samples",
    )

    model = fit(
        train,
        cfg.library,
        diff=cfg.diff,
        opt=cfg.optimizer,
        ensemble=cfg.ensemble,
        normalize_columns=cfg.normalize_columns,
    )
    test_score = score(model, test, "r2")
    _log(args.verbose, f"test r2 = {test_score:.6f}")

    eq_lines = equations(model, precision=cfg.precision)
    report = {
        "schema": SCHEMA_VERSION,
        "equations": eq_lines,
        "coefficients": model.xi,
        "feature_names": list(model.feature_names),
        "target_names": list(model.target_names),
        "score": test_score,
        "diagnostics": {
            "score_metric": "r2",
            "train_fraction": cfg.train_fraction,
            "seed": cfg.seed,
            **{k: v for k, v in model.diagnostics.items()},
        },
        "library": library_to_json(cfg.library),
        "diff": diff_to_json(cfg.diff),
    }
    if model.ensemble is not None:
        report["ensemble"] = {
            "inclusion_probability": model.ensemble.inclusion_probability,
            "iqr": model.ensemble.iqr,
            "n_failed": model.ensemble.n_failed,
        }

    pred = predict(model, test)
    if isinstance(cfg.library, WeakPDE):
        fm = evaluate(cfg.library, test, cfg.diff)
        actual = fm.weak_lhs
        pred_flat = pred
    else:
        actual = differentiate_dataset(test, cfg.diff, "t").reshape(
            -1, test.n_states
        )
        pred_flat = pred.reshape(actual.shape)

    out.mkdir(parents=True, exist_ok=True)
    header = ["sample"]
    for name in model.target_names:
        header += [f"predicted_{name}", f"computed_{name}"]
    rows = [",".join(header)]
    for i in range(pred_flat.shape[0]):
        cells = [str(i)]
        for j in range(pred_flat.shape[1]):
            cells += [repr(float(pred_flat[i, j])), repr(float(actual[i, j]))]
        rows.append(",".join(cells))

    _write_atomic(out / "report.json", _dump_json(report))
    _write_atomic(out / "equations.txt", "\n".join(eq_lines) + "\n")
    _write_atomic(out / "prediction_vs_truth.csv", "\n".join(rows) + "\n")
    print("\n".join(eq_lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def model_from_report(report: dict) -> FittedModel:
    """Rebuild a fitted model from a report.json document."""
    from .config import check_schema

    check_schema(report, "report")
    for key in ("coefficients", "feature_names", "target_names", "library", "diff"):
        if key not in report:
            raise SpecError(f"report is missing field {key!r}")
    xi = np.asarray(report["coefficients"], dtype=float)
    names = tuple(report["feature_names"])
    targets = tuple(report["target_names"])
    if xi.shape != (len(names), len(targets)):
        raise SpecError(
            f"report coefficients shape {xi.shape} does not match "
            f"{len(names)} features x {len(targets)} targets"
        )
    coefficients = Coefficients(
        xi=xi,
        support=xi != 0.0,
        names=names,
        residuals=np.zeros(len(targets)),
    )
    return FittedModel(
        coefficients=coefficients,
        library=library_from_json(report["library"]),
        diff=diff_from_json(report["diff"]),
        target_names=targets,
    )


def cmd_score(args) -> int:
    report = _load_json(Path(args.config), "report")
    model = model_from_report(report)
    dataset = load_dataset(args.data)
    if dataset.n_states != len(model.target_names):
        raise SpecError(
            f"dataset has {dataset.n_states} states, report targets "
            f"{len(model.target_names)}"
        )
    result = {
        "schema": SCHEMA_VERSION,
        "r2": score(model, dataset, "r2"),
        "rmse": score(model, dataset, "rmse"),
        "n_samples": dataset.n_samples,
    }
    text = _dump_json(result)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_atomic(out / "score.json", text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsedyn",
        description="Sparse discovery of governing equations from data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON spec/config path")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--verbose", action="store_true")

    gen = sub.add_parser("generate", help="write a benchmark dataset directory")
    common(gen)
    gen.set_defaults(func=cmd_generate)

    fit_p = sub.add_parser("fit", help="fit a model per a discovery config")
    common(fit_p)
    fit_p.add_argument("--diff", help="override: fd:<order> | sg:<w>,<p> | spectral[:<f>]")
    fit_p.add_argument(
        "--optimizer", help="override: stlsq:<l>,<a> | sr3:<l>,<nu>,<reg> | ssr | frols"
    )
    fit_p.add_argument("--ensemble", help="override: n=20,rows=0.6,drop=0,agg=median,seed=0")
    fit_p.set_defaults(func=cmd_fit)

    score_p = sub.add_parser("score", help="score a saved report against a dataset")
    common(score_p)
    score_p.add_argument("--data", required=True, help="dataset directory or CSV")
    score_p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
