"""Window-free eye-movement segmentation network.

Five same-padded convolutions with ReLU between them map a depth-3 (x, y, t)
input of any height to 5-class logits of the same height. The first layer has
kernel height 2 and is sign-initialised so that each pair of weights stacked
along height has opposite signs, which makes it respond to local change.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from gazeconv.data import NUM_CLASSES, GazeSequence, augment, make_batches, to_input_tensor
from gazeconv.errors import ConfigurationError, LengthError, NumericalError, ShapeError
from gazeconv.schedule import StepSchedule
from gazeconv.tensor import (ConvLayer, OptimConfig, Tensor, conv1d_forward, optimizer_step, relu,
                             softmax, softmax_cross_entropy)

log = logging.getLogger(__name__)

MODEL_VERSION = 1
SEG_KERNEL_HEIGHTS = (2, 3, 5, 7, 9)
SEG_WIDTHS = (16, 16, 16, 16, NUM_CLASSES)


def enforce_opposite_signs(weight: np.ndarray) -> np.ndarray:
    """Negate the second of each height-stacked pair when both share a sign.

    ``weight`` has shape (out_depth, in_depth, 2). Magnitudes are unchanged.
    """
    weight = np.array(weight, dtype=np.float64)
    if weight.shape[-1] != 2:
        raise ConfigurationError("sign rule applies to kernel height 2 only")
    same = weight[..., 0] * weight[..., 1] > 0
    weight[..., 1] = np.where(same, -weight[..., 1], weight[..., 1])
    return weight


def sign_init_first_layer(layer: ConvLayer, rng: np.random.Generator) -> ConvLayer:
    """Re-draw ``layer`` with the base initializer, then apply the sign rule."""
    if layer.kernel_height != 2:
        raise ConfigurationError(f"sign-based init needs kernel height 2, got {layer.kernel_height}")
    fresh = ConvLayer.random(layer.in_depth, layer.out_depth, 2, rng)
    layer.weight = enforce_opposite_signs(fresh.weight)
    layer.bias = fresh.bias
    layer.weight_grad = np.zeros_like(layer.weight)
    layer.bias_grad = np.zeros_like(layer.bias)
    layer.reset_optimizer_state()
    return layer


def has_opposite_signs(layer: ConvLayer) -> bool:
    return bool(np.all(layer.weight[..., 0] * layer.weight[..., 1] <= 0))


def build_stack(rng: np.random.Generator, in_depth: int, kernel_heights, widths, sign_first: bool) -> list[ConvLayer]:
    if len(kernel_heights) != len(widths):
        raise ConfigurationError("kernel_heights and widths must have equal length")
    layers = []
    depth = in_depth
    for k, w in zip(kernel_heights, widths):
        layers.append(ConvLayer.random(depth, w, k, rng))
        depth = w
    if sign_first:
        sign_init_first_layer(layers[0], rng)
    return layers


def forward_stack(layers: list[ConvLayer], x: Tensor) -> Tensor:
    """Same-padded convs, ReLU after every layer but the last."""
    for i, layer in enumerate(layers):
        x = conv1d_forward(x, layer, "same")
        if i < len(layers) - 1:
            x = relu(x)
    return x


@dataclass
class SegModel:
    layers: list[ConvLayer]
    class_weights: np.ndarray = field(default_factory=lambda: np.ones(NUM_CLASSES))
    version: int = MODEL_VERSION
    trained: bool = False

    kind = "segment"

    def __post_init__(self):
        self.class_weights = np.asarray(self.class_weights, dtype=np.float64)
        if len(self.layers) != 5:
            raise ConfigurationError("segmentation model has exactly five convolution layers")
        if self.layers[0].kernel_height != 2 or self.layers[0].in_depth != 3:
            raise ConfigurationError("first layer must have kernel height 2 and input depth 3")
        if self.layers[-1].out_depth != NUM_CLASSES:
            raise ConfigurationError(f"last layer must emit {NUM_CLASSES} channels")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_depth != b.in_depth:
                raise ConfigurationError("consecutive layer depths do not chain")


def build_seg_model(rng: np.random.Generator, kernel_heights=SEG_KERNEL_HEIGHTS, widths=SEG_WIDTHS) -> SegModel:
    if len(kernel_heights) != 5 or kernel_heights[0] != 2 or widths[-1] != NUM_CLASSES:
        raise ConfigurationError("segmentation net needs 5 layers, first kernel 2 and 5 output channels")
    return SegModel(build_stack(rng, 3, kernel_heights, widths, sign_first=True))


def seg_forward(model: SegModel, input: Tensor) -> Tensor:
    """Logits of shape (5, h) (or (batch, 5, h)) for an (x, y, t) input of height h."""
    if input.depth != 3:
        raise ShapeError(f"segmentation input must have depth 3, got {input.depth}")
    return forward_stack(model.layers, input)


@dataclass
class SegTrainConfig:
    initial_lr: float = 1e-2
    weight_decay: float = 1e-4
    momentum: float = 0.9
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 500
    stop_lr: float = 1e-6
    optimizer: str = "sgd_momentum"
    batch_size: int = 4
    jitter: bool = True
    shift: bool = True
    jitter_fraction: float = 0.02
    shift_fraction: float = 0.1
    crop: bool = True
    min_crop_fraction: float = 0.5
    # crop lengths are floored to a multiple of this so equal heights share a batch
    length_quantum: int = 16
    max_epochs: int | None = None

    def schedule(self) -> StepSchedule:
        return StepSchedule(self.initial_lr, self.lr_decay_factor, self.lr_decay_every, self.stop_lr)

    def optim(self) -> OptimConfig:
        return OptimConfig(self.optimizer, self.initial_lr, self.weight_decay, self.momentum)

    def to_dict(self) -> dict:
        return asdict(self)


def class_weights_from_labels(label_arrays, n_classes: int = NUM_CLASSES) -> np.ndarray:
    """Inverse relative frequency, normalised to mean 1 over the classes present.

    Absent classes get weight 1; they never contribute to the loss.
    """
    counts = np.zeros(n_classes)
    for labels in label_arrays:
        counts += np.bincount(np.asarray(labels), minlength=n_classes)[:n_classes]
    weights = np.ones(n_classes)
    present = counts > 0
    if present.any():
        inv = counts.sum() / counts[present]
        weights[present] = inv / inv.mean()
    return weights


def crop_bounds(h: int, rng: np.random.Generator, min_fraction: float, quantum: int = 1) -> tuple[int, int]:
    shortest = max(1, math.ceil(min_fraction * h))
    length = int(rng.integers(shortest, h + 1))
    if quantum > 1 and length >= quantum:
        length -= length % quantum
    start = int(rng.integers(0, h - length + 1))
    return start, start + length


def seg_train(model: SegModel, dataset: list[GazeSequence], config: SegTrainConfig | None = None,
              rng: np.random.Generator | None = None, callback=None):
    """Train in place; returns ``(model, history)``.

    ``history`` holds one ``{"epoch", "lr", "loss"}`` dict per epoch.
    ``callback(epoch, model)`` is invoked after every epoch when given.
    """
    config = config or SegTrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    if not dataset:
        raise ConfigurationError("empty training set")
    if any(seq.labels is None for seq in dataset):
        raise ConfigurationError("segmentation training needs fully labelled sequences")
    model.class_weights = class_weights_from_labels([seq.labels for seq in dataset])
    optim = config.optim()
    schedule = config.schedule()
    base = [(to_input_tensor(seq), seq.labels) for seq in dataset]
    history = []

    for epoch, lr in schedule:
        if config.max_epochs is not None and epoch > config.max_epochs:
            break
        items = []
        for tensor, labels in base:
            tensor = augment(tensor, rng, config.jitter, config.shift, config.jitter_fraction, config.shift_fraction)
            if config.crop and tensor.height >= 2:
                a, b = crop_bounds(tensor.height, rng, config.min_crop_fraction, config.length_quantum)
                tensor, labels = Tensor(tensor.values[:, a:b]), labels[a:b]
            items.append((tensor, labels))
        batches = make_batches(items, rng, config.batch_size, height=lambda item: item[0].height)

        total, count = 0.0, 0
        for batch in batches:
            x = Tensor(np.stack([item[0].values for item in batch]))
            y = np.stack([item[1] for item in batch])
            loss = softmax_cross_entropy(seg_forward(model, x), y, model.class_weights)
            if not np.isfinite(loss.item()):
                raise NumericalError(f"non-finite segmentation loss at epoch {epoch} (lr={lr:g})")
            loss.backward()
            optimizer_step(model.layers, optim, lr)
            total += loss.item() * y.size
            count += y.size
        history.append({"epoch": epoch, "lr": lr, "loss": total / count})
        log.debug("epoch %d lr %g loss %.6f", epoch, lr, total / count)
        if callback is not None:
            callback(epoch, model)
    model.trained = True
    return model, history


def seg_predict(model: SegModel, seq: GazeSequence):
    """Per-sample labels (argmax, ties to the lowest index) and (5, n) probabilities."""
    if len(seq) == 0:
        raise LengthError("empty sequence")
    probs = softmax(seg_forward(model, to_input_tensor(seq)).values)
    return np.argmax(probs, axis=0), probs
