"""MAPE against the fraction of target data used, per method and target.

    python3 scripts/fraction_sweep.py scripts/configs/fractions.yaml runs/fractions

Writes report.csv, summary.csv and one SVG chart per (target, condition),
then prints the mean MAPE table.
"""

import argparse
import logging

from edtl.config import load_config
from edtl.harness import run_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("out")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    cfg = load_config(args.config).override(workers=args.workers)
    report = run_sweep(cfg, args.out)
    print(f"{'method':9s} {'target':6s} {'cond':9s} "
          + " ".join(f"{f:>7g}" for f in cfg.fractions))
    agg = report.aggregates()
    for t in cfg.targets:
        for c in cfg.conditions:
            for m in cfg.methods:
                cells = [agg.get((m, t, f, c)) for f in cfg.fractions]
                print(f"{m:9s} {t:6s} {c:9s} "
                      + " ".join(f"{v[0]:7.3f}" if v else "      -" for v in cells))
    for f in report.failures:
        print("failed:", f)


if __name__ == "__main__":
    main()
