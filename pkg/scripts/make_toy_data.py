"""Write the synthetic corpora as CSV directories usable by the ``gazeconv`` CLI.

    python3 scripts/make_toy_data.py --out toy_data

creates ``toy_data/segment`` (velocity-labelled fixations/saccades, one
file per recording, subject id as filename prefix) and ``toy_data/sine``
(smooth error-free paths for reconstruction and generation).
"""

import argparse
import os

import numpy as np

from gazeconv.data import write_csv
from gazeconv.toy import segmentation_corpus, sine_corpus


def write_all(directory, sequences):
    os.makedirs(directory, exist_ok=True)
    for i, seq in enumerate(sequences):
        write_csv(seq, os.path.join(directory, f"{seq.subject_id}_{i:03d}.csv"))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="toy_data")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--subjects", type=int, default=8)
    parser.add_argument("--samples", type=int, default=250)
    args = parser.parse_args()

    seg_rng, sine_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(args.seed).spawn(2))
    write_all(os.path.join(args.out, "segment"), segmentation_corpus(seg_rng, args.subjects, 2, args.samples))
    write_all(os.path.join(args.out, "sine"), sine_corpus(sine_rng, args.subjects, 400))
    print(f"wrote {args.out}/segment and {args.out}/sine")


if __name__ == "__main__":
    main()
