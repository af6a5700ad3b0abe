"""Desk-scale runs of the three networks on synthetic data.

    python3 scripts/toy_experiments.py [segment] [reconstruct] [generate]

Each experiment trains with the shortened schedule from ``gazeconv.toy`` and
prints its headline numbers. Roughly one minute per experiment on one core.
"""

import argparse
import time

import numpy as np

from gazeconv.evaluation import ConfusionMatrix, delta_magnitudes, js_divergence, magnitude_histogram, metrics_csv
from gazeconv.genvae import build_vae, delta_sections, generate_scanpath, vae_train
from gazeconv.reconnet import EVAL_FRACTIONS, build_recon_model, recon_evaluate, recon_train, sample_clean_sections
from gazeconv.segnet import build_seg_model, seg_predict, seg_train
from gazeconv.toy import (RECON_SMOKE_CONFIG, SEG_SMOKE_CONFIG, VAE_SMOKE_CONFIG, fixation_saccade_sequence,
                          segmentation_corpus, sine_corpus)


def segment(seed):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    train = segmentation_corpus(rngs[0], 8, 2, 125)
    test = segmentation_corpus(rngs[1], 4, 2, 250)
    model, history = seg_train(build_seg_model(rngs[2]), train, SEG_SMOKE_CONFIG, rngs[3])
    for name, seqs in (("train", train), ("held-out", test)):
        cm = ConfusionMatrix()
        for seq in seqs:
            cm = cm + ConfusionMatrix.from_labels(seq.labels, seg_predict(model, seq)[0])
        print(f"{name}: accuracy {cm.accuracy:.4f}")
        print(metrics_csv(cm))
    print(f"final loss {history[-1]['loss']:.4f} after {len(history)} epochs")


def reconstruct(seed):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]
    sections = [s for seq in sine_corpus(rngs[0], 8, 400) for s in sample_clean_sections(seq, rngs[0], 4, 64, 200)]
    model, _ = recon_train(build_recon_model(rngs[1]), sections, RECON_SMOKE_CONFIG, rngs[2])
    test = sine_corpus(rngs[3], 4, 400)
    eval_seed = int(rngs[4].integers(2**31))
    reports = {}
    for name, repair in (("trained", model), ("corrupted", lambda t: t)):
        reports[name] = recon_evaluate(repair, test, np.random.default_rng(eval_seed), EVAL_FRACTIONS, 10, 5, 50, 200)
    print("fraction  entire_px  induced_px  corrupted_induced_px")
    for f in EVAL_FRACTIONS:
        print(f"{f:8.2f}  {reports['trained'].mae(f, 'entire'):9.3f}  {reports['trained'].mae(f, 'induced'):10.3f}"
              f"  {reports['corrupted'].mae(f, 'induced'):20.3f}")


def generate(seed):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    sequences = [fixation_saccade_sequence(rngs[0], 513) for _ in range(8)]
    corpus = delta_sections(sequences, 64)
    model, history = vae_train(build_vae(rngs[1]), corpus, VAE_SMOKE_CONFIG, rngs[2])
    generated = [generate_scanpath(model, rngs[3], 64, (500.0, 500.0, 0.0)) for _ in range(len(corpus))]
    real, fake = delta_magnitudes(sequences), delta_magnitudes(generated)
    edges = np.linspace(0.0, real.max(), 17)
    print(f"recon {history[-1]['recon_loss']:.5f}  kl {history[-1]['kl_loss']:.4f}")
    print(f"step magnitude px: real median {np.median(real):.2f} max {real.max():.1f}; "
          f"generated median {np.median(fake):.2f} max {fake.max():.1f}")
    print(f"JS divergence {js_divergence(magnitude_histogram(real, edges), magnitude_histogram(fake, edges)):.4f} bits")


EXPERIMENTS = {"segment": segment, "reconstruct": reconstruct, "generate": generate}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("experiments", nargs="*", metavar="{segment,reconstruct,generate}")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    unknown = set(args.experiments) - set(EXPERIMENTS)
    if unknown:
        parser.error(f"unknown experiment(s): {', '.join(sorted(unknown))}")
    for name in args.experiments or EXPERIMENTS:
        print(f"== {name}")
        start = time.perf_counter()
        EXPERIMENTS[name](args.seed)
        print(f"({time.perf_counter() - start:.0f}s)\n")


if __name__ == "__main__":
    main()
