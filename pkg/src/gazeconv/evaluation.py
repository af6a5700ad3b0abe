"""Evaluation protocols: sample-level recall/precision, subject-disjoint
cross-validation, scanpath rasterisation and generation statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from gazeconv.data import CLASS_NAMES, NUM_CLASSES, FoldPlan, GazeSequence
from gazeconv.errors import ConfigurationError

UNDEFINED = "n/a"


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64))

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @classmethod
    def from_labels(cls, true, predicted, n_classes: int = NUM_CLASSES) -> "ConfusionMatrix":
        true = np.asarray(true, dtype=np.int64).ravel()
        predicted = np.asarray(predicted, dtype=np.int64).ravel()
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (true, predicted), 1)
        return cls(counts)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else math.nan

    def to_csv(self, names=CLASS_NAMES) -> str:
        n = self.counts.shape[0]
        names = list(names[:n]) + [str(i) for i in range(len(names), n)]
        lines = ["true\\predicted," + ",".join(names)]
        lines += [names[i] + "," + ",".join(str(int(c)) for c in row) for i, row in enumerate(self.counts)]
        return "\n".join(lines) + "\n"


def recall_precision(cm: ConfusionMatrix) -> list[tuple[float | None, float | None]]:
    """Per-class ``(recall, precision)``; ``None`` where the denominator is 0."""
    counts = cm.counts
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    out = []
    for c in range(counts.shape[0]):
        tp = counts[c, c]
        recall = tp / rows[c] if rows[c] else None
        precision = tp / cols[c] if cols[c] else None
        out.append((None if recall is None else float(recall), None if precision is None else float(precision)))
    return out


def metrics_csv(cm: ConfusionMatrix, names=CLASS_NAMES) -> str:
    """Table with one row per class: class,recall,precision,support."""
    fmt = lambda v: UNDEFINED if v is None else f"{v:.4f}"
    lines = ["class,recall,precision,support"]
    support = cm.counts.sum(axis=1)
    for c, (r, p) in enumerate(recall_precision(cm)):
        name = names[c] if c < len(names) else str(c)
        lines.append(f"{name},{fmt(r)},{fmt(p)},{int(support[c])}")
    return "\n".join(lines) + "\n"


@dataclass
class FoldReport:
    fold: int
    test_subjects: list[str]
    train_subjects: list[str]
    confusion: ConfusionMatrix

    @property
    def n_samples(self) -> int:
        return self.confusion.total


def cross_validate(dataset: Sequence[GazeSequence], fold_plan: FoldPlan,
                   train_fn: Callable[[list[GazeSequence]], object],
                   predict_fn: Callable[[object, GazeSequence], np.ndarray],
                   n_classes: int = NUM_CLASSES):
    """Train on the complement of each fold, test on the fold.

    Returns ``(aggregate ConfusionMatrix, [FoldReport, ...])``. Only labelled
    samples are scored.
    """
    missing = {seq.subject_id for seq in dataset} - set(fold_plan.assignment)
    if missing:
        raise ConfigurationError(f"subjects without a fold: {sorted(missing)}")
    reports = []
    total = ConfusionMatrix(np.zeros((n_classes, n_classes), dtype=np.int64))
    for fold in range(fold_plan.k):
        test = [s for s in dataset if fold_plan.assignment[s.subject_id] == fold]
        train = [s for s in dataset if fold_plan.assignment[s.subject_id] != fold]
        test_subjects = sorted({s.subject_id for s in test})
        train_subjects = sorted({s.subject_id for s in train})
        if set(test_subjects) & set(train_subjects):
            raise ConfigurationError(f"fold {fold} leaks subjects between train and test")
        labelled = [s for s in test if s.labels is not None]
        if not labelled or sum(len(s) for s in labelled) == 0:
            raise ConfigurationError(f"fold {fold} has no labelled test samples")
        model = train_fn(train)
        cm = ConfusionMatrix(np.zeros((n_classes, n_classes), dtype=np.int64))
        for seq in labelled:
            cm = cm + ConfusionMatrix.from_labels(seq.labels, predict_fn(model, seq), n_classes)
        reports.append(FoldReport(fold, test_subjects, train_subjects, cm))
        total = total + cm
    return total, reports


# ---------------------------------------------------------------------------
# Scanpath images


@dataclass
class ScanpathImage:
    """8-bit RGB raster: red dots at samples, green path lines, blue time ramp."""

    pixels: np.ndarray  # (height, width, 3) uint8

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def red(self):
        return self.pixels[..., 0]

    @property
    def green(self):
        return self.pixels[..., 1]

    @property
    def blue(self):
        return self.pixels[..., 2]

    def save_png(self, path):
        from PIL import Image

        Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG")


def line_pixels(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer Bresenham line including both endpoints."""
    points = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        points.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def rasterize_scanpath(seq: GazeSequence, canvas, dot_radius: int = 1) -> ScanpathImage:
    width, height = int(canvas[0]), int(canvas[1])
    img = np.zeros((height, width, 3), dtype=np.uint8)
    xs = np.rint(seq.x).astype(np.int64)
    ys = np.rint(seq.y).astype(np.int64)
    span = seq.t[-1] - seq.t[0]
    ramp = (seq.t - seq.t[0]) / span if span > 0 else np.zeros(len(seq))
    blue = np.rint(255 * ramp).astype(np.uint8)

    def inside(x, y):
        return 0 <= x < width and 0 <= y < height

    for (x0, y0), (x1, y1) in zip(zip(xs[:-1], ys[:-1]), zip(xs[1:], ys[1:])):
        for x, y in line_pixels(int(x0), int(y0), int(x1), int(y1)):
            if inside(x, y):
                img[y, x, 1] = 255
    r2 = dot_radius * dot_radius
    offsets = [(dx, dy) for dx in range(-dot_radius, dot_radius + 1)
               for dy in range(-dot_radius, dot_radius + 1) if dx * dx + dy * dy <= r2]
    for x, y, b in zip(xs, ys, blue):
        for dx, dy in offsets:
            if inside(x + dx, y + dy):
                img[y + dy, x + dx, 0] = 255
                img[y + dy, x + dx, 2] = b
    return ScanpathImage(img)


def image_features(image: ScanpathImage) -> np.ndarray:
    """Channel statistics used by the nearest-centroid check.

    Per channel: fraction of lit pixels, mean intensity, and spatial spread
    (std of lit-pixel x and y, relative to the canvas size).
    """
    feats = []
    h, w = image.height, image.width
    for c in range(3):
        channel = image.pixels[..., c]
        lit = np.nonzero(channel)
        feats.append(len(lit[0]) / channel.size)
        feats.append(channel.mean() / 255.0)
        feats.append(lit[1].std() / w if len(lit[0]) else 0.0)
        feats.append(lit[0].std() / h if len(lit[0]) else 0.0)
    return np.array(feats)


def nearest_centroid_accuracy(reference: dict, queries: dict) -> tuple[float, ConfusionMatrix]:
    """Classify query images by the closest reference-class feature centroid.

    ``reference`` and ``queries`` map class name to lists of
    :class:`ScanpathImage`. Features are standardised with reference statistics.
    """
    names = sorted(reference)
    ref_feats = {n: np.array([image_features(im) for im in reference[n]]) for n in names}
    stacked = np.concatenate(list(ref_feats.values()))
    mu, sd = stacked.mean(axis=0), stacked.std(axis=0)
    sd[sd == 0] = 1.0
    centroids = np.array([((ref_feats[n] - mu) / sd).mean(axis=0) for n in names])
    true, pred = [], []
    for i, n in enumerate(names):
        for im in queries.get(n, []):
            f = (image_features(im) - mu) / sd
            true.append(i)
            pred.append(int(np.argmin(((centroids - f) ** 2).sum(axis=1))))
    cm = ConfusionMatrix.from_labels(true, pred, len(names))
    return cm.accuracy, cm


# ---------------------------------------------------------------------------
# Generation statistics


def delta_magnitudes(sequences: Sequence[GazeSequence]) -> np.ndarray:
    return np.concatenate([np.hypot(np.diff(s.x), np.diff(s.y)) for s in sequences])


def magnitude_histogram(magnitudes: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Normalised histogram; values beyond the last edge land in the last bin."""
    clipped = np.clip(magnitudes, edges[0], edges[-1])
    counts, _ = np.histogram(clipped, edges)
    return counts / counts.sum()


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence in bits (0 <= JS <= 1)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    p, q = p / p.sum(), q / q.sum()
    m = 0.5 * (p + q)

    def kl(a, b):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / b[nz])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)
