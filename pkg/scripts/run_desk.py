"""Train both variants on the 200/50/50 synthetic split over several seeds and score the test split.

Prints one row per run plus the per-variant median; writes desk_results.csv
under --out.
"""
import argparse
import csv
import statistics
import time
from pathlib import Path

from vslnet.cli import load_config, run_training
from vslnet.evaluation import evaluate, predict


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(Path(__file__).resolve().parents[1] / "configs" / "desk.json"))
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--variants", default="net,base")
    ap.add_argument("--out", default="runs/desk")
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]
    out = Path(args.out)
    rows = []
    for variant in args.variants.split(","):
        for seed in seeds:
            run_dir = out / f"{variant}_seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            cfg = load_config(args.config, seed=seed, out=str(run_dir), **{"model.variant": variant})
            t0 = time.perf_counter()
            model, result, data = run_training(cfg, run_dir)
            r = evaluate(predict(model, data["test"]), data["test"])
            row = {"variant": variant, "seed": seed, "epochs": len(result.log), "best_epoch": result.best_epoch,
                   "r1_03": r.r1[0.3], "r1_05": r.r1[0.5], "r1_07": r.r1[0.7], "miou": r.miou,
                   "seconds": round(time.perf_counter() - t0, 1)}
            rows.append(row)
            print(f"{variant:4s} seed {seed}: mIoU {r.miou:6.2f}  R@0.5 {r.r1[0.5]:5.1f}  "
                  f"({row['epochs']} epochs, {row['seconds']}s)", flush=True)
    for variant in args.variants.split(","):
        mious = [r["miou"] for r in rows if r["variant"] == variant]
        print(f"{variant:4s} median test mIoU {statistics.median(mious):.2f}")
    with open(out / "desk_results.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


if __name__ == "__main__":
    main()
