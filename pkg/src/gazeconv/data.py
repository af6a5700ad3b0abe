"""Gaze recordings: CSV ingest, tensor encodings, augmentation, batching, folds.

CSV schema: ``t_ms,x_px,y_px[,label]``, comma separated, header optional.
Labels use the vocabulary in :data:`CLASS_NAMES`. Non-finite x/y/t values are
replaced by 0 at load time and listed in the sequence's sanitation report.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from gazeconv.errors import ConfigurationError, DataFormatError, LengthError, ShapeError
from gazeconv.tensor import Tensor

CLASS_NAMES = ("fixation", "saccade", "pursuit", "noise", "psm")
FIXATION, SACCADE, PURSUIT, NOISE, PSM = range(5)
NUM_CLASSES = len(CLASS_NAMES)

#: Fixed divisor applied to every raw value before it enters a network.
SCALE = 100.0

DEFAULT_SCHEMA = {"t": 0, "x": 1, "y": 2, "label": 3}
HEADER = ("t_ms", "x_px", "y_px")


class GazeSample(NamedTuple):
    t: float
    x: float
    y: float
    label: int | None = None


@dataclass
class GazeSequence:
    """Columnar (t, x, y[, label]) recording of one eye."""

    subject_id: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray | None = None
    sample_rate_hz: float | None = None
    flagged: np.ndarray | None = None
    sanitation: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        n = len(self.t)
        if n == 0:
            raise LengthError("a gaze sequence needs at least one sample")
        if len(self.x) != n or len(self.y) != n:
            raise ShapeError("t, x and y must have equal length")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ShapeError("labels must have one entry per sample")
        if self.flagged is None:
            self.flagged = np.zeros(n, dtype=bool)
        self.flagged = np.asarray(self.flagged, dtype=bool)

    def __len__(self):
        return len(self.t)

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    @property
    def samples(self) -> list[GazeSample]:
        labels = self.labels if self.labels is not None else [None] * len(self)
        return [GazeSample(float(t), float(x), float(y), None if lab is None else int(lab))
                for t, x, y, lab in zip(self.t, self.x, self.y, labels)]

    def __getitem__(self, index) -> GazeSample:
        label = None if self.labels is None else int(self.labels[index])
        return GazeSample(float(self.t[index]), float(self.x[index]), float(self.y[index]), label)

    def slice(self, start: int, stop: int) -> "GazeSequence":
        return GazeSequence(
            self.subject_id, self.t[start:stop], self.x[start:stop], self.y[start:stop],
            None if self.labels is None else self.labels[start:stop],
            self.sample_rate_hz, self.flagged[start:stop],
            [(row - start, why) for row, why in self.sanitation if start <= row < stop],
        )

    def with_positions(self, x, y, t=None) -> "GazeSequence":
        return GazeSequence(self.subject_id, self.t if t is None else t, x, y, self.labels,
                            self.sample_rate_hz, self.flagged.copy(), list(self.sanitation))


# ---------------------------------------------------------------------------
# CSV I/O


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path, schema: dict | None = None, subject_id: str | None = None,
             sample_rate_hz: float | None = None) -> GazeSequence:
    """Read one recording.

    ``schema`` maps ``t``, ``x``, ``y`` and optionally ``label`` to column
    indices or header names. Row numbers in errors and in the sanitation
    report are 0-based data-row indices (header excluded).
    """
    path = os.fspath(path)
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    if subject_id is None:
        subject_id = subject_from_path(path)
    with open(path, newline="") as handle:
        rows = [row for row in csv.reader(handle) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise DataFormatError(f"{path} is empty")

    header = None
    if not all(_is_number(cell) for cell in rows[0]):
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path} has a header but no data rows")

    columns = {}
    for key, col in schema.items():
        if isinstance(col, str):
            if header is None or col not in header:
                if key == "label":
                    continue
                raise DataFormatError(f"column {col!r} not found in header")
            col = header.index(col)
        columns[key] = col
    if "label" in columns and columns["label"] >= max(len(r) for r in rows):
        del columns["label"]
    has_label = "label" in columns

    n = len(rows)
    values = {key: np.empty(n) for key in ("t", "x", "y")}
    labels = np.empty(n, dtype=np.int64) if has_label else None
    for i, row in enumerate(rows):
        for key in ("t", "x", "y"):
            col = columns[key]
            if col >= len(row):
                raise DataFormatError(f"missing column {key}", row=i)
            try:
                values[key][i] = float(row[col])
            except ValueError:
                raise DataFormatError(f"cannot parse {key}={row[col]!r}", row=i) from None
        if has_label:
            cell = row[columns["label"]].strip() if columns["label"] < len(row) else ""
            try:
                label = float(cell)
            except ValueError:
                raise DataFormatError(f"cannot parse label={cell!r}", row=i) from None
            if not label.is_integer() or not 0 <= label < NUM_CLASSES:
                raise DataFormatError(f"label {cell!r} outside 0..{NUM_CLASSES - 1}", row=i)
            labels[i] = int(label)

    flagged = np.zeros(n, dtype=bool)
    report = []
    bad = {key: ~np.isfinite(values[key]) for key in ("t", "x", "y")}
    for i in np.flatnonzero(bad["t"] | bad["x"] | bad["y"]):
        reason = ",".join(f"{key}={values[key][i]}" for key in ("t", "x", "y") if bad[key][i])
        report.append((int(i), f"non-finite {reason} set to 0"))
        flagged[i] = True
    for key in ("t", "x", "y"):
        values[key][bad[key]] = 0.0

    # monotonicity is checked on rows whose timestamp was finite
    t_ok = values["t"][~bad["t"]]
    rows_ok = np.flatnonzero(~bad["t"])
    decreasing = np.flatnonzero(np.diff(t_ok) < 0)
    if decreasing.size:
        raise DataFormatError("timestamps decrease", row=int(rows_ok[decreasing[0] + 1]))

    return GazeSequence(subject_id, values["t"], values["x"], values["y"], labels,
                        sample_rate_hz, flagged, report)


def subject_from_path(path) -> str:
    """Subject id is the file stem up to the first underscore."""
    stem = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return stem.split("_")[0]


def write_csv(seq: GazeSequence, path, extra_columns: dict | None = None, include_labels: bool = True):
    """Write ``seq`` in the package schema; ``extra_columns`` are appended in order."""
    extra_columns = extra_columns or {}
    header = list(HEADER)
    cols = [seq.t, seq.x, seq.y]
    if include_labels and seq.labels is not None:
        header.append("label")
        cols.append(seq.labels)
    for name, col in extra_columns.items():
        header.append(name)
        cols.append(np.asarray(col))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*cols):
            writer.writerow([_fmt(v) for v in row])


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def load_directory(directory, pattern_suffix: str = ".csv") -> list[GazeSequence]:
    names = sorted(n for n in os.listdir(directory) if n.endswith(pattern_suffix))
    return [load_csv(os.path.join(directory, n)) for n in names]


def format_sanitation_report(seq: GazeSequence) -> str:
    return "".join(f"{row} {reason}\n" for row, reason in seq.sanitation)


# ---------------------------------------------------------------------------
# Tensor encodings


def to_input_tensor(seq: GazeSequence) -> Tensor:
    """Depth-3 tensor with channels (x, y, t), each divided by 100."""
    if len(seq) == 0:
        raise LengthError("empty sequence")
    return Tensor(np.stack([seq.x, seq.y, seq.t]) / SCALE)


def from_input_tensor(tensor: Tensor, template: GazeSequence | None = None, subject_id: str = "generated") -> GazeSequence:
    x, y, t = np.asarray(tensor.values) * SCALE
    if template is not None:
        return template.with_positions(x, y, t)
    return GazeSequence(subject_id, t, x, y)


def to_delta_tensor(seq: GazeSequence) -> Tensor:
    """Depth-3 tensor of per-step changes (dx, dy, dt), each divided by 100."""
    if len(seq) < 2:
        raise LengthError("delta encoding needs at least two samples")
    return Tensor(np.stack([np.diff(seq.x), np.diff(seq.y), np.diff(seq.t)]) / SCALE)


def integrate_deltas(deltas: Tensor, start, subject_id: str = "generated") -> GazeSequence:
    """Inverse of :func:`to_delta_tensor` given the first sample ``start``.

    ``start`` is a :class:`GazeSample` or an ``(x, y, t)`` triple.
    """
    if isinstance(start, GazeSample):
        x0, y0, t0 = start.x, start.y, start.t
    else:
        x0, y0, t0 = start
    d = np.asarray(deltas.values) * SCALE
    x = np.concatenate([[x0], x0 + np.cumsum(d[0])])
    y = np.concatenate([[y0], y0 + np.cumsum(d[1])])
    t = np.concatenate([[t0], t0 + np.cumsum(d[2])])
    return GazeSequence(subject_id, t, x, y)


# ---------------------------------------------------------------------------
# Augmentation and batching


def augment(tensor: Tensor, rng: np.random.Generator, jitter_enabled: bool = True,
            shift_enabled: bool = True, jitter: float = 0.02, shift_fraction: float = 0.1) -> Tensor:
    """Position jitter (multiplicative, up to +-2%) and a constant per-channel shift.

    Only the x and y channels (0 and 1) are touched.
    """
    if tensor.depth != 3:
        raise ShapeError("augment expects a depth-3 (x, y, t) tensor")
    values = tensor.values.copy()
    pos = values[..., 0:2, :]
    if jitter_enabled:
        pos *= rng.uniform(1.0 - jitter, 1.0 + jitter, size=pos.shape)
    if shift_enabled:
        spread = pos.max(axis=-1, keepdims=True) - pos.min(axis=-1, keepdims=True)
        pos += rng.uniform(-1.0, 1.0, size=spread.shape) * shift_fraction * spread
    return Tensor(values)


def crop_random(tensor: Tensor, rng: np.random.Generator, min_fraction: float = 0.5) -> Tensor:
    """Contiguous slice of random length in ``[ceil(min_fraction * h), h]``."""
    h = tensor.height
    if h < 2:
        raise LengthError("crop_random needs height >= 2")
    shortest = max(1, math.ceil(min_fraction * h))
    length = int(rng.integers(shortest, h + 1))
    start = int(rng.integers(0, h - length + 1))
    return Tensor(tensor.values[..., start:start + length])


def make_batches(items: Sequence, rng: np.random.Generator, batch_size: int, height=None) -> list[list]:
    """Group items into batches of equal height.

    Items are bucketed by height (``height(item)``, default ``item.height``),
    shuffled inside each bucket, chunked into ``batch_size`` groups, and the
    batch order is shuffled.
    """
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    height = height or (lambda item: item.height)
    buckets: dict[int, list] = {}
    for item in items:
        buckets.setdefault(height(item), []).append(item)
    batches = []
    for h in sorted(buckets):
        members = buckets[h]
        order = rng.permutation(len(members))
        members = [members[i] for i in order]
        batches.extend(members[i:i + batch_size] for i in range(0, len(members), batch_size))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def stack(tensors: Sequence[Tensor]) -> Tensor:
    return Tensor(np.stack([t.values for t in tensors]))


# ---------------------------------------------------------------------------
# Subject-disjoint folds


@dataclass
class FoldPlan:
    k: int
    assignment: dict[str, int]

    def subjects(self, fold: int) -> list[str]:
        return sorted(s for s, f in self.assignment.items() if f == fold)

    def to_text(self) -> str:
        return "".join(f"{subject}={fold}\n" for subject, fold in sorted(self.assignment.items()))

    @classmethod
    def from_text(cls, text: str, k: int | None = None) -> "FoldPlan":
        assignment = {}
        for line in text.splitlines():
            if line.strip():
                subject, fold = line.rsplit("=", 1)
                assignment[subject.strip()] = int(fold)
        return cls(k if k is not None else max(assignment.values()) + 1, assignment)


def make_folds(sequences: Sequence[GazeSequence], k: int = 4, rng: np.random.Generator | None = None) -> FoldPlan:
    """Shuffle subjects and deal them round-robin into ``k`` folds."""
    subjects = sorted({seq.subject_id for seq in sequences})
    if k < 1 or len(subjects) < k:
        raise ConfigurationError(f"{len(subjects)} subjects cannot fill {k} folds")
    rng = rng if rng is not None else np.random.default_rng(0)
    order = rng.permutation(len(subjects))
    return FoldPlan(k, {subjects[j]: i % k for i, j in enumerate(order)})
