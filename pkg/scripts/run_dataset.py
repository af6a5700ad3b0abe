"""Full protocol on a directory of recordings in the CSV schema.

    python3 scripts/run_dataset.py --data DIR --out RESULTS [--quick]

Runs 4-fold subject-disjoint segmentation CV (per-class recall/precision),
trains a reconstruction model and runs the error-injection benchmark.
The default schedules take days on a CPU; ``--quick`` caps every schedule at
20 epochs to check the plumbing.
"""

import argparse
import os
import sys

from gazeconv.cli import main as cli


def run(*argv):
    code = cli([str(a) for a in argv])
    if code:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quick", action="store_true")
    args = parser.parse_args()

    caps = []
    if args.quick:
        caps = ["--set", "segment.max_epochs=20", "--set", "reconstruct.max_epochs=20"]
    out = lambda name: os.path.join(args.out, name)
    run("eval", "segment", "--data", args.data, "--out", out("segment_cv"), "--folds", 4, "--seed", args.seed, *caps)
    run("train", "reconstruct", "--data", args.data, "--out", out("reconstruct_model"), "--seed", args.seed, *caps)
    draws = ["--draws", 5, "--sections", 10] if args.quick else []
    run("eval", "reconstruct", "--model", out("reconstruct_model/model.json"), "--data", args.data,
        "--out", out("reconstruct_eval"), "--seed", args.seed, *draws)
    print(f"reports in {args.out}: segment_cv/metrics.csv, reconstruct_eval/reconstruction_mae.csv")


if __name__ == "__main__":
    main()
