"""Command-line interface: train, predict, evaluate, alpha-curve.

Configuration is strict JSON (unknown keys rejected); command-line flags
override config values.  GRANULEX_THREADS caps worker parallelism; the
current implementation executes sequentially, which trivially satisfies the
schedule-independence contract.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import combiners, evaluation, report, training
from .datasets import GeneratorSpec, generate, load_csv
from .learners import Dataset, LearnerSpec, default_roster, spec_from_name
from .training import AlphaGrid, default_alpha_grid

CONFIG_KEYS = {
    "datasets", "learners", "methods", "alpha_grid", "fixed_alpha",
    "h", "folds", "repeats", "seed", "significance", "inner_folds",
}
DATASET_KEYS = {"path", "label_column", "header", "generator", "name"}
GENERATOR_KEYS = {"kind", "n", "d", "noise", "seed"}


class CliError(Exception):
    pass


def _threads_cap() -> int:
    raw = os.environ.get("GRANULEX_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise CliError(f"GRANULEX_THREADS must be an integer, got {raw!r}")
    if cap < 1:
        raise CliError("GRANULEX_THREADS must be >= 1")
    return cap


def parse_grid(text: str) -> AlphaGrid:
    """Parse "lo:step:hi" into an inclusive alpha grid."""
    try:
        lo, step, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise CliError(f"grid must be lo:step:hi, got {text!r}")
    if step <= 0 or hi < lo:
        raise CliError(f"invalid grid bounds {text!r}")
    count = int(round((hi - lo) / step)) + 1
    values = tuple(round(lo + i * step, 12) for i in range(count))
    return AlphaGrid(values)


def _parse_learners(text: str) -> list[LearnerSpec]:
    return [spec_from_name(name.strip()) for name in text.split(",") if name.strip()]


def _load_dataset_entry(entry: dict) -> Dataset:
    unknown = set(entry) - DATASET_KEYS
    if unknown:
        raise CliError(f"unknown dataset config keys: {sorted(unknown)}")
    if "generator" in entry:
        gen = entry["generator"]
        bad = set(gen) - GENERATOR_KEYS
        if bad:
            raise CliError(f"unknown generator keys: {sorted(bad)}")
        return generate(GeneratorSpec(**gen))
    if "path" not in entry:
        raise CliError("dataset entry needs 'path' or 'generator'")
    return load_csv(
        entry["path"],
        label_column=entry.get("label_column", -1),
        header=entry.get("header", True),
        name=entry.get("name", ""),
    )


def _load_features_csv(path, header: bool = True) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if header:
        rows = rows[1:]
    try:
        return np.asarray([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise CliError(f"{path}: non-numeric feature cell ({exc})")


def _resolve_config(path: str | None, args) -> dict:
    cfg: dict = {}
    if path:
        with open(path) as fh:
            raw = json.load(fh)
        if isinstance(raw, dict) and "config" in raw and "results" in raw:
            raw = raw["config"]  # accept a previously emitted report echo
        unknown = set(raw) - CONFIG_KEYS
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(raw)

    # Flag overrides (CLI > config > defaults).
    if getattr(args, "data", None):
        cfg["datasets"] = [
            {"path": args.data, "label_column": args.label_column,
             "header": not args.no_header}
        ]
    for key in ("folds", "repeats", "seed", "h", "inner_folds"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "grid", None):
        cfg["alpha_grid"] = args.grid
    if getattr(args, "alpha", None) is not None:
        cfg["fixed_alpha"] = args.alpha
    if getattr(args, "learners", None):
        cfg["learners"] = [s.strip() for s in args.learners.split(",")]
    if getattr(args, "methods", None):
        cfg["methods"] = [s.strip() for s in args.methods.split(",")]

    # Defaults.
    cfg.setdefault("learners", [s.name for s in default_roster()])
    cfg.setdefault("methods", list(evaluation.default_methods()))
    cfg.setdefault("alpha_grid", list(default_alpha_grid().values))
    cfg.setdefault("fixed_alpha", 1.0)
    cfg.setdefault("h", combiners.DEFAULT_H)
    cfg.setdefault("folds", 10)
    cfg.setdefault("repeats", 10)
    cfg.setdefault("seed", 0)
    cfg.setdefault("significance", 0.05)
    cfg.setdefault("inner_folds", 10)
    if "datasets" not in cfg:
        raise CliError("no datasets configured (use --data or a config file)")
    return cfg


def _grid_from_cfg(value) -> AlphaGrid:
    if isinstance(value, str):
        return parse_grid(value)
    return AlphaGrid(tuple(float(v) for v in value))


def cmd_train(args) -> int:
    specs = _parse_learners(args.learners) if args.learners else default_roster()
    data = load_csv(args.data, label_column=args.label_column,
                    header=not args.no_header)
    kwargs = dict(h=args.h or combiners.DEFAULT_H, n_folds=args.folds or 10)
    if args.alpha is not None:
        ensemble = training.train(
            data, specs, args.seed or 0, fixed_alpha=args.alpha, **kwargs
        )
    else:
        grid = parse_grid(args.grid) if args.grid else default_alpha_grid()
        ensemble = training.train(data, specs, args.seed or 0, grid=grid, **kwargs)
    training.save_ensemble(args.output, ensemble)
    print(f"trained ensemble (alpha={ensemble.alpha:g}, h={ensemble.h}) "
          f"-> {args.output}")
    return 0


def cmd_predict(args) -> int:
    ensemble = training.load_ensemble(args.model)
    x = _load_features_csv(args.data, header=not args.no_header)
    details = training.predict_batch(ensemble, x)
    labels = ensemble.catalog.labels
    header = ["obs_id"]
    if args.emit_intervals:
        for lab in labels:
            header += [f"{lab}_lower", f"{lab}_upper"]
    for lab in labels:
        header.append(f"{lab}_ncm")
    header.append("decision")
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        for i, det in enumerate(details):
            row: list = [i]
            if args.emit_intervals:
                for g in det.intervals:
                    row += [f"{g.lower:.17g}", f"{g.upper:.17g}"]
            row += [f"{v:.17g}" for v in det.memberships]
            row.append(labels[det.decision])
            writer.writerow(row)
    finally:
        if args.output:
            out.close()
    return 0


def cmd_evaluate(args) -> int:
    _threads_cap()
    cfg = _resolve_config(args.config, args)
    datasets = [_load_dataset_entry(e) for e in cfg["datasets"]]
    proto = evaluation.ProtocolConfig(
        folds=int(cfg["folds"]),
        repeats=int(cfg["repeats"]),
        seed=int(cfg["seed"]),
        significance=float(cfg["significance"]),
        methods=tuple(cfg["methods"]),
        learners=tuple(spec_from_name(n) for n in cfg["learners"]),
        alpha_grid=_grid_from_cfg(cfg["alpha_grid"]),
        fixed_alpha=float(cfg["fixed_alpha"]),
        h=cfg["h"],
        inner_folds=int(cfg["inner_folds"]),
    )
    result = evaluation.run_protocol(datasets, proto)
    echo = dict(cfg)
    echo["alpha_grid"] = list(proto.alpha_grid.values)
    paths = report.write_report_files(result, args.output, echo)
    print(f"report written: {paths['json']}")
    return 0


def cmd_alpha_curve(args) -> int:
    specs = _parse_learners(args.learners) if args.learners else default_roster()
    data = load_csv(args.data, label_column=args.label_column,
                    header=not args.no_header)
    grid = parse_grid(args.grid) if args.grid else default_alpha_grid()
    h_kinds = [args.h] if args.h else list(combiners.H_KINDS)
    curves = evaluation.alpha_error_curves(
        data, specs, grid, h_kinds, args.folds or 10, args.seed or 0
    )
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["alpha"] + [f"error_{h}" for h in h_kinds])
        for i, alpha in enumerate(grid.values):
            row = [f"{alpha:.17g}"]
            for h in h_kinds:
                row.append(f"{curves[h][i][1]:.17g}")
            writer.writerow(row)
    finally:
        if args.output:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="granulex",
        description="Granular-interval classifier ensemble workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_label=True):
        if with_label:
            p.add_argument("--label-column", default=-1,
                           type=lambda s: int(s) if s.lstrip("-").isdigit() else s,
                           help="label column index or name (default: last)")
        p.add_argument("--no-header", action="store_true")
        p.add_argument("--seed", type=int, default=None)

    p_train = sub.add_parser("train", help="fit and serialize an ensemble")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--learners")
    p_train.add_argument("--alpha", type=float, help="fixed alpha (skips CV)")
    p_train.add_argument("--grid", help="alpha grid lo:step:hi")
    p_train.add_argument("--h", choices=combiners.H_KINDS)
    p_train.add_argument("--folds", type=int)
    p_train.add_argument("--output", required=True)
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="classify a feature CSV")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--output")
    p_pred.add_argument("--emit-intervals", action="store_true")
    add_common(p_pred, with_label=False)
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="run the comparison protocol")
    p_eval.add_argument("--config")
    p_eval.add_argument("--data")
    p_eval.add_argument("--folds", type=int)
    p_eval.add_argument("--repeats", type=int)
    p_eval.add_argument("--inner-folds", dest="inner_folds", type=int)
    p_eval.add_argument("--alpha", type=float)
    p_eval.add_argument("--grid")
    p_eval.add_argument("--h", choices=combiners.H_KINDS)
    p_eval.add_argument("--learners")
    p_eval.add_argument("--methods")
    p_eval.add_argument("--output", required=True)
    add_common(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_curve = sub.add_parser("alpha-curve",
                             help="emit meta-level error vs alpha as CSV")
    p_curve.add_argument("--data", required=True)
    p_curve.add_argument("--grid", help="alpha grid lo:step:hi")
    p_curve.add_argument("--h", choices=combiners.H_KINDS,
                         help="one h function (default: all three)")
    p_curve.add_argument("--learners")
    p_curve.add_argument("--folds", type=int)
    p_curve.add_argument("--output")
    add_common(p_curve)
    p_curve.set_defaults(func=cmd_alpha_curve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
