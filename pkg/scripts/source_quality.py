"""Sensitivity to the quality of the pretrained source model.

    python3 scripts/source_quality.py --bad B --targets E,M,W,D --fractions 0.2,0.4

For each target and fraction, pretrains on the configured good source and on
the mis-shifted ``--bad`` profile, fine-tunes Transfer and EDTL on identical
target data, and prints the MAPE gaps averaged over seeds.
"""

import argparse

from edtl.config import ExperimentConfig, load_config
from edtl.harness import compare_sources


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--bad", default="B")
    ap.add_argument("--targets", default="E")
    ap.add_argument("--fractions", default="0.2,0.4")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    print(f"{'target':6s} {'frac':>5s} {'T good':>7s} {'T bad':>7s} {'E good':>7s} "
          f"{'E bad':>7s} {'gap T':>6s} {'gap E':>6s}")
    for t in args.targets.split(","):
        for f in (float(v) for v in args.fractions.split(",")):
            c = compare_sources(cfg, args.bad, t, f)
            print(f"{t:6s} {f:5g} {c.transfer_good:7.3f} {c.transfer_bad:7.3f} "
                  f"{c.edtl_good:7.3f} {c.edtl_bad:7.3f} {c.transfer_gap:6.3f} {c.edtl_gap:6.3f}")


if __name__ == "__main__":
    main()
