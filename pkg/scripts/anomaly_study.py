"""Degradation scale (anomalous minus clean MAPE) by method, target and fraction.

    python3 scripts/anomaly_study.py runs/fractions/report.csv

Reads a report produced with an anomaly spec (see fraction_sweep.py) and
prints the table, including a per-seed sign count so that small mean
differences can be judged against seed noise.
"""

import argparse
from collections import defaultdict

import numpy as np

from edtl.harness import read_report_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("report")
    args = ap.parse_args()
    rep = read_report_csv(args.report)
    paired = defaultdict(dict)
    for r in rep.records:
        paired[(r.method, r.target, r.fraction, r.seed)][r.condition] = r.mape_percent
    per_cell = defaultdict(list)
    for (m, t, f, _), v in paired.items():
        if {"clean", "anomalous"} <= set(v):
            per_cell[(t, f, m)].append(v["anomalous"] - v["clean"])
    if not per_cell:
        raise SystemExit("report has no clean/anomalous pairs")
    print(f"{'target':6s} {'frac':>5s} {'method':9s} {'mean':>8s} {'sd':>7s} {'worse':>6s}")
    for (t, f, m), d in sorted(per_cell.items()):
        d = np.array(d)
        sd = d.std(ddof=1) if len(d) > 1 else 0.0
        print(f"{t:6s} {f:5g} {m:9s} {d.mean():+8.3f} {sd:7.3f} {int((d > 0).sum()):>3d}/{len(d)}")


if __name__ == "__main__":
    main()
