"""Synthetic gaze corpora for smoke training and tests.

These are deliberately simple signals whose ground truth is known:
fixation/saccade paths labelled by a velocity threshold, and smooth
Lissajous-like paths for reconstruction.
"""

from __future__ import annotations

import numpy as np

from gazeconv.data import FIXATION, SACCADE, GazeSequence
from gazeconv.genvae import VaeTrainConfig
from gazeconv.reconnet import ReconTrainConfig
from gazeconv.segnet import SegTrainConfig

#: px/ms; 1 px/ms = 1000 px/s
DEFAULT_VELOCITY_THRESHOLD = 1.0

# Shortened schedules for desk-scale corpora. Position jitter is off: 2% of an
# absolute coordinate near 500 px is ~10 px, far above fixation-scale motion.
SEG_SMOKE_CONFIG = SegTrainConfig(lr_decay_every=800, stop_lr=1e-4, jitter=False)
RECON_SMOKE_CONFIG = ReconTrainConfig(lr_decay_every=150, stop_lr=1e-4, l2_epochs=50, jitter=False)
# With plain SGD and a unit KL weight the toy VAE collapses to the mean delta.
VAE_SMOKE_CONFIG = VaeTrainConfig(optimizer="adam", learning_rate=1e-2, warmup_lr=1e-3, warmup_epochs=30,
                                  lr_decay_every=400, stop_lr=1e-4, kl_weight=1e-3)


def velocity_threshold_labels(seq: GazeSequence, threshold: float = DEFAULT_VELOCITY_THRESHOLD) -> np.ndarray:
    """Label each sample saccade if the speed of the step into it exceeds ``threshold``.

    The first sample uses the speed of the first step.
    """
    if len(seq) < 2:
        return np.full(len(seq), FIXATION, dtype=np.int64)
    dist = np.hypot(np.diff(seq.x), np.diff(seq.y))
    dt = np.maximum(np.diff(seq.t), 1e-9)
    speed = dist / dt
    speed = np.concatenate([speed[:1], speed])
    return np.where(speed > threshold, SACCADE, FIXATION).astype(np.int64)


def fixation_saccade_path(rng: np.random.Generator, n_samples: int, dt: float = 4.0,
                          fixation_len=(20, 60), saccade_len=(3, 7), amplitude=(80.0, 300.0),
                          jitter_px: float = 0.5, canvas=(1000.0, 1000.0)):
    """Return x, y, t arrays of alternating fixations and cosine-profile saccades."""
    w, h = canvas
    xs, ys = [], []
    cx, cy = rng.uniform(0.2 * w, 0.8 * w), rng.uniform(0.2 * h, 0.8 * h)
    while len(xs) < n_samples:
        n_fix = int(rng.integers(fixation_len[0], fixation_len[1] + 1))
        xs.extend(cx + rng.normal(0.0, jitter_px, n_fix))
        ys.extend(cy + rng.normal(0.0, jitter_px, n_fix))
        amp = rng.uniform(*amplitude)
        angle = rng.uniform(0, 2 * np.pi)
        tx = np.clip(cx + amp * np.cos(angle), 0.1 * w, 0.9 * w)
        ty = np.clip(cy + amp * np.sin(angle), 0.1 * h, 0.9 * h)
        n_sac = int(rng.integers(saccade_len[0], saccade_len[1] + 1))
        profile = 0.5 * (1 - np.cos(np.pi * np.arange(1, n_sac + 1) / n_sac))
        xs.extend(cx + (tx - cx) * profile)
        ys.extend(cy + (ty - cy) * profile)
        cx, cy = tx, ty
    x = np.asarray(xs[:n_samples])
    y = np.asarray(ys[:n_samples])
    t = dt * np.arange(n_samples)
    return x, y, t


def fixation_saccade_sequence(rng: np.random.Generator, n_samples: int = 200, subject_id: str = "s0",
                              dt: float = 4.0, threshold: float = DEFAULT_VELOCITY_THRESHOLD, **kwargs) -> GazeSequence:
    x, y, t = fixation_saccade_path(rng, n_samples, dt=dt, **kwargs)
    seq = GazeSequence(subject_id, t, x, y, sample_rate_hz=1000.0 / dt)
    seq.labels = velocity_threshold_labels(seq, threshold)
    return seq


def segmentation_corpus(rng: np.random.Generator, n_subjects: int = 4, sequences_per_subject: int = 2,
                        n_samples: int = 250, **kwargs) -> list[GazeSequence]:
    return [fixation_saccade_sequence(rng, n_samples, subject_id=f"s{s:02d}", **kwargs)
            for s in range(n_subjects) for _ in range(sequences_per_subject)]


def sine_path_sequence(rng: np.random.Generator, n_samples: int = 400, subject_id: str = "s0",
                       dt: float = 10.0, canvas=(1000.0, 1000.0)) -> GazeSequence:
    """Smooth two-frequency path; every sample labelled fixation (no errors)."""
    w, h = canvas
    t = dt * np.arange(n_samples)
    seconds = t / 1000.0
    ax, ay = rng.uniform(0.1, 0.3) * w, rng.uniform(0.1, 0.3) * h
    fx, fy = rng.uniform(0.2, 0.8, size=2)
    px, py = rng.uniform(0, 2 * np.pi, size=2)
    x = 0.5 * w + ax * np.sin(2 * np.pi * fx * seconds + px)
    y = 0.5 * h + ay * np.sin(2 * np.pi * fy * seconds + py)
    return GazeSequence(subject_id, t, x, y, labels=np.full(n_samples, FIXATION), sample_rate_hz=1000.0 / dt)


def sine_corpus(rng: np.random.Generator, n_sequences: int = 8, n_samples: int = 400, **kwargs) -> list[GazeSequence]:
    return [sine_path_sequence(rng, n_samples, subject_id=f"s{i:02d}", **kwargs) for i in range(n_sequences)]


def random_labelled_corpus(rng: np.random.Generator, n_subjects: int, n_samples: int = 200,
                           n_classes: int = 2) -> list[GazeSequence]:
    """Sequences whose labels are i.i.d. uniform noise (leakage canary data)."""
    out = []
    for s in range(n_subjects):
        x, y, t = fixation_saccade_path(rng, n_samples)
        labels = rng.integers(0, n_classes, size=n_samples)
        out.append(GazeSequence(f"s{s:02d}", t, x, y, labels))
    return out
