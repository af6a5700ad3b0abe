"""Reconstruction network: repairs zeroed or randomised samples in raw gaze data.

Same fully convolutional layout as the segmentation net (sign-initialised
height-2 first layer, same padding, ReLU between layers) but the last layer
emits the (x, y, t) signal itself with a height-25 kernel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from gazeconv.data import NOISE, SCALE, GazeSequence, augment, make_batches, to_input_tensor
from gazeconv.errors import ConfigurationError, DataError, LengthError, NumericalError, ShapeError
from gazeconv.schedule import StepSchedule
from gazeconv.segnet import MODEL_VERSION, build_stack, crop_bounds, forward_stack
from gazeconv.tensor import ConvLayer, OptimConfig, Tensor, l1_loss, l2_loss, optimizer_step

log = logging.getLogger(__name__)

RECON_KERNEL_HEIGHTS = (2, 7, 14, 25)
RECON_WIDTHS = (16, 32, 32, 3)
EVAL_FRACTIONS = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
INJECTION_MODES = ("zero", "random")


@dataclass
class ReconModel:
    layers: list[ConvLayer]
    version: int = MODEL_VERSION
    trained: bool = False

    kind = "reconstruct"

    def __post_init__(self):
        first, last = self.layers[0], self.layers[-1]
        if first.kernel_height != 2 or first.in_depth != 3:
            raise ConfigurationError("first layer must have kernel height 2 and input depth 3")
        if last.out_depth != 3 or last.kernel_height != 25:
            raise ConfigurationError("last layer must have output depth 3 and kernel height 25")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_depth != b.in_depth:
                raise ConfigurationError("consecutive layer depths do not chain")


def build_recon_model(rng: np.random.Generator, kernel_heights=RECON_KERNEL_HEIGHTS, widths=RECON_WIDTHS) -> ReconModel:
    heights = list(kernel_heights)
    if 7 in heights:
        i = heights.index(7)
        for a, b in zip(heights[i:], heights[i + 1:-1]):
            if b != 2 * a:
                raise ConfigurationError("kernel heights must double after the height-7 layer")
    return ReconModel(build_stack(rng, 3, kernel_heights, widths, sign_first=True))


def recon_forward(model: ReconModel, input: Tensor) -> Tensor:
    if input.depth != 3:
        raise ShapeError(f"reconstruction input must have depth 3, got {input.depth}")
    return forward_stack(model.layers, input)


def reconstruct_sequence(model: ReconModel, seq: GazeSequence) -> GazeSequence:
    """Repaired copy of ``seq``; timestamps are kept from the input."""
    out = recon_forward(model, to_input_tensor(seq)).values * SCALE
    return seq.with_positions(out[0], out[1])


# ---------------------------------------------------------------------------
# Section sampling and error injection


def error_mask(seq: GazeSequence) -> np.ndarray:
    bad = seq.flagged.copy()
    if seq.labels is not None:
        bad |= seq.labels == NOISE
    return bad


def sample_clean_sections(seq: GazeSequence, rng: np.random.Generator, count: int, min_len: int, max_len: int,
                          max_attempts: int | None = None) -> list[GazeSequence]:
    """Draw ``count`` random sections that contain no error-labelled or sanitised sample.

    Sections hitting an error are discarded and redrawn, up to ``max_attempts``
    draws in total (default ``100 * count``).
    """
    n = len(seq)
    max_len = min(max_len, n)
    if min_len < 1 or min_len > max_len:
        raise DataError(f"cannot draw sections of length [{min_len}, {max_len}] from {n} samples")
    bad = error_mask(seq)
    prefix = np.concatenate([[0], np.cumsum(bad)])
    max_attempts = 100 * count if max_attempts is None else max_attempts
    sections = []
    attempts = 0
    while len(sections) < count:
        if attempts >= max_attempts:
            raise DataError(f"only {len(sections)} of {count} clean sections found in {attempts} draws")
        attempts += 1
        length = int(rng.integers(min_len, max_len + 1))
        start = int(rng.integers(0, n - length + 1))
        if prefix[start + length] - prefix[start] == 0:
            sections.append(seq.slice(start, start + length))
    return sections


def injection_count(fraction: float, height: int) -> int:
    # the epsilon keeps e.g. 0.05 * 100 at 5 instead of ceil(5.000000000000001)
    return min(height, math.ceil(fraction * height - 1e-9))


def inject_errors(tensor: Tensor, rng: np.random.Generator, fraction: float, mode: str = "zero",
                  value_range=None):
    """Corrupt ``ceil(fraction * h)`` distinct random positions of the x/y channels.

    ``mode="zero"`` writes 0; ``mode="random"`` writes uniform values in
    ``[0, max]`` where ``max`` is per channel, taken from ``value_range`` or the
    tensor itself. The time channel is never touched. Returns
    ``(corrupted, mask)``.
    """
    if not 0 < fraction < 1:
        raise ConfigurationError("fraction must lie in (0, 1)")
    if mode not in INJECTION_MODES:
        raise ConfigurationError(f"mode must be one of {INJECTION_MODES}")
    if tensor.depth != 3 or tensor.batched:
        raise ShapeError("inject_errors expects a single (3, h) tensor")
    h = tensor.height
    values = tensor.values.copy()
    positions = rng.choice(h, size=injection_count(fraction, h), replace=False)
    mask = np.zeros(h, dtype=bool)
    mask[positions] = True
    if mode == "zero":
        values[0:2, positions] = 0.0
    else:
        top = np.maximum(tensor.values[0:2].max(axis=1), 0.0) if value_range is None else np.asarray(value_range)
        values[0:2, positions] = rng.uniform(0.0, 1.0, size=(2, positions.size)) * top[:, None]
    return Tensor(values), mask


# ---------------------------------------------------------------------------
# Training


@dataclass
class ReconTrainConfig:
    warmup_lr: float = 1e-4
    warmup_epochs: int = 10
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    optimizer: str = "adam"
    l2_epochs: int = 100
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 500
    stop_lr: float = 1e-6
    batch_size: int = 4
    jitter: bool = True
    shift: bool = True
    jitter_fraction: float = 0.02
    shift_fraction: float = 0.1
    crop: bool = True
    min_crop_fraction: float = 0.5
    length_quantum: int = 16
    fractions: tuple = EVAL_FRACTIONS
    max_epochs: int | None = None

    def schedule(self) -> StepSchedule:
        return StepSchedule(self.learning_rate, self.lr_decay_factor, self.lr_decay_every, self.stop_lr,
                            warmup_lr=self.warmup_lr, warmup_epochs=self.warmup_epochs)

    def optim(self) -> OptimConfig:
        return OptimConfig(self.optimizer, self.learning_rate, self.weight_decay,
                           beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon)

    def loss_kind(self, epoch: int) -> str:
        return "l2" if epoch <= self.l2_epochs else "l1"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d


def recon_train(model: ReconModel, clean_sections: list[GazeSequence], config: ReconTrainConfig | None = None,
                rng: np.random.Generator | None = None, callback=None):
    """Denoising training on error-free sections; returns ``(model, history)``.

    Every step corrupts a fresh copy of each (augmented) section with a random
    fraction and mode and regresses the output against the clean signal.
    """
    config = config or ReconTrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    if not clean_sections:
        raise ConfigurationError("empty training set")
    for seq in clean_sections:
        if error_mask(seq).any():
            raise DataError(f"training section of subject {seq.subject_id} contains errors")
    optim = config.optim()
    base = [to_input_tensor(seq) for seq in clean_sections]
    history = []

    for epoch, lr in config.schedule():
        if config.max_epochs is not None and epoch > config.max_epochs:
            break
        kind = config.loss_kind(epoch)
        loss_fn = l2_loss if kind == "l2" else l1_loss
        items = []
        for tensor in base:
            tensor = augment(tensor, rng, config.jitter, config.shift, config.jitter_fraction, config.shift_fraction)
            if config.crop and tensor.height >= 2:
                a, b = crop_bounds(tensor.height, rng, config.min_crop_fraction, config.length_quantum)
                tensor = Tensor(tensor.values[:, a:b])
            items.append(tensor)
        total, count = 0.0, 0
        for batch in make_batches(items, rng, config.batch_size):
            corrupted = []
            for clean in batch:
                fraction = float(rng.choice(config.fractions))
                mode = INJECTION_MODES[int(rng.integers(2))]
                corrupted.append(inject_errors(clean, rng, fraction, mode)[0].values)
            x = Tensor(np.stack(corrupted))
            target = Tensor(np.stack([t.values for t in batch]))
            loss = loss_fn(recon_forward(model, x), target)
            if not np.isfinite(loss.item()):
                raise NumericalError(f"non-finite reconstruction loss at epoch {epoch} (lr={lr:g}, {kind})")
            loss.backward()
            optimizer_step(model.layers, optim, lr)
            total += loss.item() * len(batch)
            count += len(batch)
        history.append({"epoch": epoch, "lr": lr, "loss_kind": kind, "loss": total / count})
        log.debug("epoch %d lr %g %s %.6f", epoch, lr, kind, total / count)
        if callback is not None:
            callback(epoch, model)
    model.trained = True
    return model, history


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class ReconReport:
    """Mean Euclidean (x, y) error in pixels per injected fraction and scope."""

    rows: list[tuple[float, str, float]] = field(default_factory=list)
    scatter: list[tuple[int, float, float]] = field(default_factory=list)

    def mae(self, fraction: float, scope: str) -> float:
        for f, s, v in self.rows:
            if s == scope and math.isclose(f, fraction):
                return v
        raise KeyError((fraction, scope))

    def to_csv(self) -> str:
        lines = ["fraction,scope,mae_px"]
        lines += [f"{f:.2f},{s},{v:.6f}" for f, s, v in self.rows]
        return "\n".join(lines) + "\n"

    def scatter_csv(self) -> str:
        lines = ["section_id,normalized_induced_error,normalized_reconstruction_error"]
        lines += [f"{i},{a:.6f},{b:.6f}" for i, a, b in self.scatter]
        return "\n".join(lines) + "\n"


def _xy_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.hypot(a[0] - b[0], a[1] - b[1])


def recon_evaluate(model, test_sequences: list[GazeSequence], rng: np.random.Generator,
                   fractions=EVAL_FRACTIONS, n_draws: int = 100, sections_per_draw: int = 100,
                   min_len: int = 50, max_len: int = 500) -> ReconReport:
    """Error-injection benchmark.

    ``n_draws`` times a random test file is picked and ``sections_per_draw``
    clean sections of random length are cut from it. Every section is
    corrupted at every fraction (mode drawn at random per section) and
    reconstructed. Errors are Euclidean (x, y) distances scaled back to pixels
    (x100), averaged over the whole section and over injected positions only.

    ``model`` is a :class:`ReconModel` or any callable mapping a corrupted
    tensor to a repaired one. A fraction of 0 means no injection.
    """
    if isinstance(model, ReconModel):
        repair = lambda tensor: recon_forward(model, tensor)
    else:
        repair = model
    fractions = list(fractions)
    sections = []
    for _ in range(n_draws):
        seq = test_sequences[int(rng.integers(len(test_sequences)))]
        sections.extend(sample_clean_sections(seq, rng, sections_per_draw, min(min_len, len(seq)), max_len))

    entire = {f: [] for f in fractions}
    induced = {f: [] for f in fractions}
    raw_scatter = []
    for section in sections:
        clean = to_input_tensor(section)
        mode = INJECTION_MODES[int(rng.integers(2))]
        for f in fractions:
            if f == 0:
                corrupted, mask = Tensor(clean.values), np.zeros(clean.height, dtype=bool)
            else:
                corrupted, mask = inject_errors(clean, rng, f, mode)
            repaired = repair(corrupted).values
            dist = _xy_distance(repaired, clean.values) * SCALE
            entire[f].append(dist.mean())
            induced[f].append(dist[mask].mean() if mask.any() else 0.0)
            if mask.any():
                injected = (_xy_distance(corrupted.values, clean.values) * SCALE)[mask].mean()
                raw_scatter.append((injected, dist[mask].mean()))

    report = ReconReport()
    for f in fractions:
        report.rows.append((f, "entire", float(np.mean(entire[f]))))
    for f in fractions:
        report.rows.append((f, "induced", float(np.mean(induced[f]))))
    if raw_scatter:
        top = max(a for a, _ in raw_scatter) or 1.0
        report.scatter = [(i, a / top, b / top) for i, (a, b) in enumerate(raw_scatter)]
    return report
