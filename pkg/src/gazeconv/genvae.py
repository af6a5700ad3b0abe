"""Convolutional VAE over delta-encoded scanpaths, and scanpath synthesis.

Encoder: two conv+ReLU+average-pool stages, then a head whose two output
channels are the latent mean and log-variance (height h/4). A depth-1 latent
``z`` is drawn with the reparameterisation trick. The decoder mirrors the
encoder with nearest-neighbour doubling and emits (dx, dy, dt).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from gazeconv.data import SCALE, GazeSequence, make_batches, to_delta_tensor
from gazeconv.errors import ConfigurationError, LengthError, NumericalError, ShapeError
from gazeconv.schedule import StepSchedule
from gazeconv.segnet import MODEL_VERSION
from gazeconv.tensor import (ConvLayer, OptimConfig, Tensor, add, avg_pool_halve, channel_slice, conv1d_forward,
                             kl_standard_normal, l2_loss, optimizer_step, relu, reparameterize, scale,
                             upsample_double)

log = logging.getLogger(__name__)

ENCODER_WIDTHS = (16, 32)
ENCODER_KERNELS = (5, 5)
HEAD_KERNEL = 3
DECODER_WIDTHS = (32, 16)
DECODER_KERNELS = (5, 5)
OUTPUT_KERNEL = 3
MIN_DT_MS = 1.0


@dataclass
class VaeModel:
    encoder_layers: list[ConvLayer]
    head: ConvLayer
    decoder_layers: list[ConvLayer]
    version: int = MODEL_VERSION
    trained: bool = False

    kind = "generate"

    def __post_init__(self):
        if len(self.encoder_layers) != 2:
            raise ConfigurationError("the encoder has exactly two halving stages")
        if self.encoder_layers[0].in_depth != 3 or self.head.out_depth != 2:
            raise ConfigurationError("encoder takes depth 3 and the head emits (mean, log-variance)")
        if self.decoder_layers[0].in_depth != 1 or self.decoder_layers[-1].out_depth != 3:
            raise ConfigurationError("decoder maps a depth-1 latent to depth 3")
        if len(self.decoder_layers) != 3:
            raise ConfigurationError("decoder has two upsampling stages and an output layer")

    @property
    def layers(self) -> list[ConvLayer]:
        return [*self.encoder_layers, self.head, *self.decoder_layers]


def build_vae(rng: np.random.Generator, encoder_widths=ENCODER_WIDTHS, encoder_kernels=ENCODER_KERNELS,
              head_kernel=HEAD_KERNEL, decoder_widths=DECODER_WIDTHS, decoder_kernels=DECODER_KERNELS,
              output_kernel=OUTPUT_KERNEL) -> VaeModel:
    enc = []
    depth = 3
    for w, k in zip(encoder_widths, encoder_kernels):
        enc.append(ConvLayer.random(depth, w, k, rng))
        depth = w
    head = ConvLayer.random(depth, 2, head_kernel, rng)
    dec = []
    depth = 1
    for w, k in zip(decoder_widths, decoder_kernels):
        dec.append(ConvLayer.random(depth, w, k, rng))
        depth = w
    dec.append(ConvLayer.random(depth, 3, output_kernel, rng))
    return VaeModel(enc, head, dec)


def vae_encode(model: VaeModel, deltas: Tensor):
    """Return ``(mean, log_variance)``, each depth 1 and height h/4."""
    if deltas.depth != 3:
        raise ShapeError(f"encoder input must have depth 3, got {deltas.depth}")
    if deltas.height % 4:
        raise ShapeError(f"height {deltas.height} is not divisible by 4; pad or crop the input first")
    x = deltas
    for layer in model.encoder_layers:
        x = avg_pool_halve(relu(conv1d_forward(x, layer)))
    stats = conv1d_forward(x, model.head)
    return channel_slice(stats, 0, 1), channel_slice(stats, 1, 2)


def vae_decode(model: VaeModel, z: Tensor) -> Tensor:
    """Map a depth-1 latent of height m to (dx, dy, dt) of height 4m."""
    if z.depth != 1:
        raise ShapeError(f"latent must have depth 1, got {z.depth}")
    x = z
    for layer in model.decoder_layers[:-1]:
        x = relu(conv1d_forward(upsample_double(x), layer))
    return conv1d_forward(x, model.decoder_layers[-1])


@dataclass
class VaeTrainConfig:
    warmup_lr: float = 1e-4
    warmup_epochs: int = 100
    learning_rate: float = 1e-3
    weight_decay: float = 1e-6
    momentum: float = 0.9
    optimizer: str = "sgd_momentum"
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 1000
    stop_lr: float = 1e-6
    kl_weight: float = 1.0
    batch_size: int = 8
    max_epochs: int | None = None

    def schedule(self) -> StepSchedule:
        return StepSchedule(self.learning_rate, self.lr_decay_factor, self.lr_decay_every, self.stop_lr,
                            warmup_lr=self.warmup_lr, warmup_epochs=self.warmup_epochs)

    def optim(self) -> OptimConfig:
        return OptimConfig(self.optimizer, self.learning_rate, self.weight_decay, self.momentum)

    def to_dict(self) -> dict:
        return asdict(self)


def vae_loss(model: VaeModel, x: Tensor, rng: np.random.Generator, kl_weight: float = 1.0, noise=None):
    """Return ``(total, recon, kl)`` tensors; total = L2(x, decode(z)) + kl_weight * KL."""
    mean, log_var = vae_encode(model, x)
    z = reparameterize(mean, log_var, rng, noise=noise)
    recon = l2_loss(vae_decode(model, z), x)
    kl = kl_standard_normal(mean, log_var)
    return add(recon, scale(kl, kl_weight)), recon, kl


def vae_train(model: VaeModel, delta_corpus: list[Tensor], config: VaeTrainConfig | None = None,
              rng: np.random.Generator | None = None, callback=None):
    """Train in place; returns ``(model, history)`` with per-epoch recon and KL terms."""
    config = config or VaeTrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    if not delta_corpus:
        raise ConfigurationError("empty training corpus")
    for t in delta_corpus:
        if t.height % 4 or t.depth != 3:
            raise ShapeError("corpus tensors must be depth 3 with height divisible by 4")
    optim = config.optim()
    history = []
    for epoch, lr in config.schedule():
        if config.max_epochs is not None and epoch > config.max_epochs:
            break
        sums = np.zeros(3)
        count = 0
        for batch in make_batches(delta_corpus, rng, config.batch_size):
            x = Tensor(np.stack([t.values for t in batch]))
            total, recon, kl = vae_loss(model, x, rng, config.kl_weight)
            if not np.isfinite(total.item()):
                raise NumericalError(f"non-finite VAE loss at epoch {epoch} (lr={lr:g})")
            total.backward()
            optimizer_step(model.layers, optim, lr)
            sums += len(batch) * np.array([total.item(), recon.item(), kl.item()])
            count += len(batch)
        mean_total, mean_recon, mean_kl = sums / count
        history.append({"epoch": epoch, "lr": lr, "loss": mean_total, "recon_loss": mean_recon, "kl_loss": mean_kl})
        if callback is not None:
            callback(epoch, model)
    model.trained = True
    return model, history


def delta_sections(sequences: list[GazeSequence], length: int) -> list[Tensor]:
    """Cut each sequence's delta tensor into non-overlapping sections of ``length``."""
    if length % 4 or length < 4:
        raise ConfigurationError("section length must be a positive multiple of 4")
    out = []
    for seq in sequences:
        d = to_delta_tensor(seq).values
        for start in range(0, d.shape[1] - length + 1, length):
            out.append(Tensor(d[:, start:start + length]))
    return out


def generate_scanpath(model: VaeModel, rng: np.random.Generator, target_length: int, start=(0.0, 0.0, 0.0),
                      subject_id: str = "generated") -> GazeSequence:
    """Sample a scanpath of ``target_length`` samples starting at ``start = (x, y, t)``.

    z ~ N(0, 1) of height ``target_length / 4`` is decoded to deltas, which are
    rescaled to pixels/ms and integrated from ``start``. The last decoded delta
    is unused so the output has exactly ``target_length`` samples. Time steps
    are clamped to at least 1 ms.
    """
    if not model.trained:
        raise ConfigurationError("generate_scanpath needs a trained model")
    if target_length < 4 or target_length % 4:
        raise LengthError("target_length must be a multiple of 4 and >= 4")
    z = Tensor(rng.standard_normal((1, target_length // 4)))
    d = vae_decode(model, z).values * SCALE
    d = d[:, : target_length - 1]
    d[2] = np.maximum(d[2], MIN_DT_MS)
    x0, y0, t0 = start
    x = np.concatenate([[x0], x0 + np.cumsum(d[0])])
    y = np.concatenate([[y0], y0 + np.cumsum(d[1])])
    t = np.concatenate([[t0], t0 + np.cumsum(d[2])])
    return GazeSequence(subject_id, t, x, y)


def center_scanpath(seq: GazeSequence, canvas) -> GazeSequence:
    """Translate x/y so the path mean sits at the canvas centre."""
    width, height = canvas
    dx = width / 2.0 - seq.x.mean()
    dy = height / 2.0 - seq.y.mean()
    return seq.with_positions(seq.x + dx, seq.y + dy)
