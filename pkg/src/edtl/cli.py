"""Command line entry point: ``edtl <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from edtl.config import ExperimentConfig, dump_config, load_config
from edtl.dataset import AnomalySpec, load_csv
from edtl.ensemble import save_edtl, train_edtl
from edtl.harness import read_report_csv, run_sweep, write_charts, write_summary_csv
from edtl.models import (fit_direct, fit_transfer, load_model, load_pretrained,
                         save_net_model, save_pretrained)
from edtl.simulator import TARGETS, write_simulation
from edtl.transfer import pretrain

log = logging.getLogger("edtl")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(","))


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(","))


def _names(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _base_config(args) -> ExperimentConfig:
    return load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()


def _with_train_flags(cfg: ExperimentConfig, args) -> ExperimentConfig:
    """Apply training/SVR flags on top of config-file values."""
    train = cfg.train
    for flag, key in (("epochs", "epochs"), ("batch_size", "batch_size"),
                      ("learning_rate", "learning_rate"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            train = replace(train, **{key: v})
    svr = cfg.svr
    for flag in ("C", "epsilon", "gamma"):
        v = getattr(args, flag, None)
        if v is not None:
            svr = replace(svr, **{flag: v})
    cfg = replace(cfg, train=train, svr=svr)
    hidden = getattr(args, "hidden", None)
    return cfg.override(hidden=_ints(hidden) if hidden else None,
                        stacking_mode=getattr(args, "stacking_mode", None),
                        folds=getattr(args, "folds", None))


def _add_train_flags(p: argparse.ArgumentParser, svr: bool = False) -> None:
    p.add_argument("--config", help="YAML experiment config; flags override it")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", help="comma-separated hidden widths, e.g. 64,64,64,64,64")
    if svr:
        p.add_argument("--C", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--gamma", type=float, help="RBF width; median heuristic if unset")
        p.add_argument("--stacking-mode", dest="stacking_mode",
                       choices=("in_sample", "out_of_fold"))
        p.add_argument("--folds", type=int)


# -- subcommands -------------------------------------------------------------------

def cmd_simulate(args) -> None:
    cfg = _base_config(args)
    d = cfg.data
    targets = _names(args.targets) if args.targets else TARGETS
    out = write_simulation(args.out, d.profile(args.source or d.source_profile),
                           d.profile(args.target or d.target_profile),
                           args.n_source or d.n_source, args.n_target or d.n_target,
                           args.seed, targets, d.dt)
    print(f"wrote simulation to {out}")


def cmd_pretrain(args) -> None:
    cfg = _with_train_flags(_base_config(args), args)
    source = load_csv(args.source, args.target_column)
    pre = pretrain(source, cfg.train, cfg.hidden, args.val_fraction)
    save_pretrained(pre, args.out, cfg.train)
    print(f"pretrained on {len(source)} rows: train mse {pre.train_mse:.6g}, "
          f"validation mse {pre.val_mse:.6g} -> {args.out}")


def cmd_train(args) -> None:
    cfg = _with_train_flags(_base_config(args), args)
    data = load_csv(args.data, args.target_column)
    if args.method == "direct":
        save_net_model(fit_direct(data, cfg.train, cfg.hidden), args.out)
    else:
        if not args.pretrained:
            raise ValueError(f"--pretrained is required for method {args.method}")
        pre = load_pretrained(args.pretrained)
        if args.method == "transfer":
            save_net_model(fit_transfer(pre, data, cfg.train, cfg.train_output), args.out)
        else:
            model = train_edtl(pre, data, cfg.train, cfg.svr, cfg.stacking_mode, cfg.folds,
                               cfg.train_output, cfg.target_scaler)
            save_edtl(model, args.out)
    print(f"trained {args.method} on {len(data)} rows -> {args.out}")


def cmd_predict(args) -> None:
    model = load_model(args.model)
    names = model.schema.names
    with open(args.input, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError(f"{args.input}: empty file")
        missing = [n for n in names if n not in header]
        if missing:
            raise ValueError(f"{args.input}: missing feature columns {missing}")
        cols = [header.index(n) for n in names]
        raw = list(reader)
    rows = np.empty((len(raw), len(cols)))
    for i, line in enumerate(raw):
        for j, c in enumerate(cols):
            try:
                rows[i, j] = float(line[c])
            except (ValueError, IndexError):
                raise ValueError(f"{args.input}: row {i + 2}, column {names[j]!r}: "
                                 f"not a number") from None
    preds = model.predict(rows) if len(raw) else np.empty(0)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header + [args.column])
        for line, p in zip(raw, preds):
            w.writerow(line + [repr(float(p))])
    print(f"wrote {len(raw)} predictions to {out}")


def cmd_sweep(args) -> None:
    cfg = _with_train_flags(_base_config(args), args)
    anomaly = cfg.anomaly
    if args.anomaly and anomaly is None:
        anomaly = AnomalySpec()
    cfg = cfg.override(
        targets=_names(args.targets) if args.targets else None,
        fractions=_floats(args.fractions) if args.fractions else None,
        methods=_names(args.methods) if args.methods else None,
        seeds=_ints(args.seeds) if args.seeds else None,
        workers=args.workers, anomaly=anomaly,
        record_wall_time=False if args.no_wall_time else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    report = run_sweep(cfg, out)
    for f in report.failures:
        log.warning("leg failed: %s %s %s %s seed %d: %s", f.method, f.target, f.fraction,
                    f.condition, f.seed, f.error)
    print(f"{len(report.records)} records, {len(report.failures)} failures -> {out}")


def cmd_report(args) -> None:
    report = read_report_csv(args.report)
    out = Path(args.out)
    paths = write_charts(report, out)
    write_summary_csv(report, out / "summary.csv")
    deg = report.degradation()
    summary = {"cells": len(report.aggregates()),
               "degradation": {"/".join(map(str, k)): v for k, v in deg.items()}}
    print(json.dumps(summary, indent=1))
    print(f"wrote {len(paths)} charts to {out}")


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edtl", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write source/target CSVs from the line simulator")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--source", help="source line profile name")
    p.add_argument("--target", help="target line profile name")
    p.add_argument("--n-source", dest="n_source", type=int)
    p.add_argument("--n-target", dest="n_target", type=int)
    p.add_argument("--targets", help="comma-separated subset of E,M,W,D")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pretrain", help="train a network on source data")
    p.add_argument("--source", required=True, help="source CSV")
    p.add_argument("--target-column", dest="target_column")
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=0.1)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train a target model")
    p.add_argument("--method", required=True, choices=("direct", "transfer", "edtl"))
    p.add_argument("--data", required=True, help="target training CSV")
    p.add_argument("--target-column", dest="target_column")
    p.add_argument("--pretrained", help="directory written by pretrain")
    p.add_argument("--out", required=True)
    _add_train_flags(p, svr=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict a CSV with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--column", default="prediction", help="name of the added column")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="run a method x fraction x seed experiment")
    p.add_argument("--out", required=True)
    p.add_argument("--targets")
    p.add_argument("--fractions")
    p.add_argument("--methods")
    p.add_argument("--seeds")
    p.add_argument("--workers", type=int)
    p.add_argument("--anomaly", action="store_true",
                   help="also train on anomaly-injected data (default protocol)")
    p.add_argument("--no-wall-time", dest="no_wall_time", action="store_true",
                   help="write wall_ms as 0 so reports are byte-reproducible")
    _add_train_flags(p, svr=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="charts and summary from a report CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic, nonzero exit
        if args.verbose:
            raise
        print(f"edtl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
