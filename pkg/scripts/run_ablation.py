"""Encoder x attention grid and highlight-extension sweep on the synthetic data.

Thin wrapper over ``vslnet ablate`` that defaults to the desk protocol and
prints the resulting table.
"""
import argparse
import csv
import sys
from pathlib import Path

from vslnet.cli import main as vslnet_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(Path(__file__).resolve().parents[1] / "configs" / "desk.json"))
    ap.add_argument("--seed", default="0")
    ap.add_argument("--jobs", default="1")
    ap.add_argument("--no-sweep", action="store_true", help="grid only")
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    argv = ["ablate", "--config", args.config, "--seed", args.seed, "--jobs", args.jobs, "--out", args.out]
    if not args.no_sweep:
        argv.append("--alphas")
    code = vslnet_main(argv)
    if code:
        sys.exit(code)
    with open(Path(args.out) / "ablation.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            print(f"{r['study']:6s} {r['variant']:4s} {r['encoder']:9s} {r['attention']:3s} "
                  f"alpha={r['alpha']:5s} mIoU={float(r['miou']):6.2f} R@0.5={float(r['r1_05']):5.1f}")


if __name__ == "__main__":
    main()
