"""Write ground-truth spans of the default synthetic test split as a predictions file.

Scoring the result with ``vslnet eval --predictions`` must give mIoU 100.
"""
import argparse
import json

from vslnet.data import SyntheticConfig, generate_synthetic_dataset
from vslnet.evaluation import Prediction


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tests/fixtures/oracle_predictions.jsonl")
    args = ap.parse_args()
    test = generate_synthetic_dataset(SyntheticConfig()).datasets()["test"]
    with open(args.out, "w") as fh:
        for s in test:
            a = s.annotation
            p = Prediction(a.video_id, s.span.start, s.span.end, a.start, a.end, 1.0)
            fh.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")
    print(f"wrote {len(test)} predictions to {args.out}")


if __name__ == "__main__":
    main()
