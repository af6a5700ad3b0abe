"""Small reverse-mode differentiation engine for 1D convolutional nets.

Values are stored as float64 arrays of shape ``(depth, height)`` or, for a
batch of equal-height signals, ``(batch, depth, height)``. The width axis of
the ``depth x 1 x height`` layout is always 1 and is not stored. Losses are
0-d tensors.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure that pushes the output gradient back to them. Parameter gradients are
accumulated on the :class:`ConvLayer` objects and cleared by
:func:`optimizer_step`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gazeconv.errors import ConfigurationError, LabelError, LengthError, ShapeError

PADDING_MODES = ("same", "valid")


class Tensor:
    """Value grid with a same-shaped gradient grid and a backward closure."""

    def __init__(self, values, parents: Sequence["Tensor"] = (), backward_fn: Callable | None = None):
        self.values = np.array(values, dtype=np.float64)
        if self.values.ndim not in (0, 2, 3):
            raise ShapeError(f"tensor must be 0-d, (depth, height) or (batch, depth, height); got {self.values.shape}")
        self.grad = np.zeros_like(self.values)
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.values.shape

    @property
    def depth(self) -> int:
        return self.values.shape[-2]

    @property
    def height(self) -> int:
        return self.values.shape[-1]

    @property
    def batched(self) -> bool:
        return self.values.ndim == 3

    def item(self) -> float:
        return float(self.values)

    def zero_grad(self):
        self.grad[...] = 0.0

    def backward(self, grad=None):
        """Propagate ``grad`` (default 1 for scalars) through the recorded graph."""
        if grad is None:
            if self.values.ndim != 0:
                raise ShapeError("backward() without an explicit gradient needs a scalar tensor")
            grad = 1.0
        self.grad = self.grad + np.asarray(grad, dtype=np.float64)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape})"


def _scalar(value: float, parents, backward_fn) -> Tensor:
    return Tensor(np.float64(value), parents=parents, backward_fn=backward_fn)


# ---------------------------------------------------------------------------
# Layers and optimizer configuration


@dataclass
class ConvLayer:
    """Convolution whose kernel spans the full input depth and slides along height."""

    in_depth: int
    out_depth: int
    kernel_height: int
    weight: np.ndarray = None
    bias: np.ndarray = None
    weight_grad: np.ndarray = field(default=None, repr=False)
    bias_grad: np.ndarray = field(default=None, repr=False)
    # SGD momentum buffers
    weight_velocity: np.ndarray = field(default=None, repr=False)
    bias_velocity: np.ndarray = field(default=None, repr=False)
    # Adam moments
    weight_m: np.ndarray = field(default=None, repr=False)
    weight_v: np.ndarray = field(default=None, repr=False)
    bias_m: np.ndarray = field(default=None, repr=False)
    bias_v: np.ndarray = field(default=None, repr=False)
    adam_step: int = 0
    has_grad: bool = False

    def __post_init__(self):
        for name in ("in_depth", "out_depth", "kernel_height"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        wshape = (self.out_depth, self.in_depth, self.kernel_height)
        if self.weight is None:
            self.weight = np.zeros(wshape)
        if self.bias is None:
            self.bias = np.zeros(self.out_depth)
        self.weight = np.array(self.weight, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weight.shape != wshape or self.bias.shape != (self.out_depth,):
            raise ShapeError(f"weight must be {wshape} and bias ({self.out_depth},)")
        self.weight_grad = np.zeros_like(self.weight)
        self.bias_grad = np.zeros_like(self.bias)
        self.reset_optimizer_state()

    @classmethod
    def random(cls, in_depth: int, out_depth: int, kernel_height: int, rng: np.random.Generator) -> "ConvLayer":
        """He-style uniform init: U(-b, b) with b = sqrt(6 / fan_in); zero bias."""
        fan_in = in_depth * kernel_height
        bound = math.sqrt(6.0 / fan_in)
        weight = rng.uniform(-bound, bound, size=(out_depth, in_depth, kernel_height))
        return cls(in_depth, out_depth, kernel_height, weight=weight)

    def reset_optimizer_state(self):
        self.weight_velocity = np.zeros_like(self.weight)
        self.bias_velocity = np.zeros_like(self.bias)
        self.weight_m = np.zeros_like(self.weight)
        self.weight_v = np.zeros_like(self.weight)
        self.bias_m = np.zeros_like(self.bias)
        self.bias_v = np.zeros_like(self.bias)
        self.adam_step = 0

    def zero_grad(self):
        self.weight_grad[...] = 0.0
        self.bias_grad[...] = 0.0
        self.has_grad = False

    @property
    def num_parameters(self) -> int:
        return self.weight.size + self.bias.size


@dataclass
class OptimConfig:
    kind: str = "sgd_momentum"
    learning_rate: float = 1e-2
    weight_decay: float = 0.0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd_momentum", "adam"):
            raise ConfigurationError(f"unknown optimizer kind {self.kind!r}")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        for name in ("momentum", "beta1", "beta2"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise ConfigurationError(f"{name} must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be > 0")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")


def optimizer_step(layers: Iterable[ConvLayer], config: OptimConfig, learning_rate: float | None = None):
    """Apply one SGD-momentum or Adam update, then zero the gradients.

    Weight decay is added to the weight gradient (classic L2), never to biases.
    A learning rate of 0 leaves parameters untouched. If no layer has received
    a gradient since the last step, nothing happens.
    """
    layers = list(layers)
    lr = config.learning_rate if learning_rate is None else float(learning_rate)
    if not any(layer.has_grad for layer in layers):
        return layers
    for layer in layers:
        gw = layer.weight_grad + config.weight_decay * layer.weight
        gb = layer.bias_grad
        if config.kind == "sgd_momentum":
            layer.weight_velocity *= config.momentum
            layer.weight_velocity += gw
            layer.bias_velocity *= config.momentum
            layer.bias_velocity += gb
            layer.weight -= lr * layer.weight_velocity
            layer.bias -= lr * layer.bias_velocity
        else:
            layer.adam_step += 1
            b1, b2, step = config.beta1, config.beta2, layer.adam_step
            for param, grad, m, v in ((layer.weight, gw, layer.weight_m, layer.weight_v),
                                      (layer.bias, gb, layer.bias_m, layer.bias_v)):
                m *= b1
                m += (1 - b1) * grad
                v *= b2
                v += (1 - b2) * grad * grad
                m_hat = m / (1 - b1**step)
                v_hat = v / (1 - b2**step)
                param -= lr * m_hat / (np.sqrt(v_hat) + config.epsilon)
        layer.zero_grad()
    return layers


# ---------------------------------------------------------------------------
# Convolution


def _padding(kernel_height: int) -> tuple[int, int]:
    left = (kernel_height - 1) // 2
    return left, kernel_height - 1 - left


def _padded(x: np.ndarray, kernel_height: int, padding: str) -> np.ndarray:
    if padding == "same":
        left, right = _padding(kernel_height)
        pad = [(0, 0)] * (x.ndim - 1) + [(left, right)]
        return np.pad(x, pad)
    if padding == "valid":
        if x.shape[-1] < kernel_height:
            raise LengthError(f"valid convolution needs height >= {kernel_height}, got {x.shape[-1]}")
        return x
    raise ConfigurationError(f"padding must be one of {PADDING_MODES}")


def _check_conv_input(x: np.ndarray, layer: ConvLayer):
    if x.ndim not in (2, 3):
        raise ShapeError(f"convolution input must be (depth, height) or (batch, depth, height); got {x.shape}")
    if x.shape[-2] != layer.in_depth:
        raise ShapeError(f"input depth {x.shape[-2]} does not match layer in_depth {layer.in_depth}")


def conv1d_values(x: np.ndarray, layer: ConvLayer, padding: str = "same") -> np.ndarray:
    _check_conv_input(x, layer)
    xp = _padded(x, layer.kernel_height, padding)
    windows = sliding_window_view(xp, layer.kernel_height, axis=-1)  # (..., D, Hout, K)
    out = np.einsum("...dhk,odk->...oh", windows, layer.weight, optimize=True)
    return out + layer.bias[:, None]


def conv1d_backward(input: Tensor, layer: ConvLayer, output_grad, padding: str = "same") -> Tensor:
    """Return the input gradient and accumulate weight/bias gradients into ``layer``."""
    x = input.values
    g = output_grad.values if isinstance(output_grad, Tensor) else np.asarray(output_grad, dtype=np.float64)
    _check_conv_input(x, layer)
    xp = _padded(x, layer.kernel_height, padding)
    out_height = xp.shape[-1] - layer.kernel_height + 1
    expected = x.shape[:-2] + (layer.out_depth, out_height)
    if g.shape != expected:
        raise ShapeError(f"output gradient shape {g.shape} does not match forward output {expected}")

    windows = sliding_window_view(xp, layer.kernel_height, axis=-1)
    layer.weight_grad += np.einsum("...oh,...dhk->odk", g, windows, optimize=True)
    layer.bias_grad += g.reshape(-1, layer.out_depth, out_height).sum(axis=(0, 2))
    layer.has_grad = True

    window_grad = np.einsum("...oh,odk->...dhk", g, layer.weight, optimize=True)
    gxp = np.zeros_like(xp)
    for k in range(layer.kernel_height):
        gxp[..., k:k + out_height] += window_grad[..., k]
    if padding == "same":
        left, _ = _padding(layer.kernel_height)
        gxp = gxp[..., left:left + x.shape[-1]]
    return Tensor(gxp)


def conv1d_forward(input: Tensor, layer: ConvLayer, padding: str = "same") -> Tensor:
    out = Tensor(conv1d_values(input.values, layer, padding), parents=(input,))

    def backward(grad):
        input.grad += conv1d_backward(input, layer, grad, padding).values

    out._backward_fn = backward
    return out


# ---------------------------------------------------------------------------
# Elementwise and resampling ops


def relu(input: Tensor) -> Tensor:
    mask = input.values > 0
    out = Tensor(np.where(mask, input.values, 0.0), parents=(input,))

    def backward(grad):
        input.grad += grad * mask

    out._backward_fn = backward
    return out


def avg_pool_halve(input: Tensor) -> Tensor:
    """Mean over non-overlapping pairs along height; an odd trailing sample is dropped."""
    h = input.height
    if h < 2:
        raise LengthError(f"average pooling needs height >= 2, got {h}")
    half = h // 2
    x = input.values[..., : 2 * half]
    out = Tensor(0.5 * (x[..., 0::2] + x[..., 1::2]), parents=(input,))

    def backward(grad):
        input.grad[..., 0 : 2 * half : 2] += 0.5 * grad
        input.grad[..., 1 : 2 * half : 2] += 0.5 * grad

    out._backward_fn = backward
    return out


def upsample_double(input: Tensor) -> Tensor:
    """Nearest-neighbour doubling along height."""
    out = Tensor(np.repeat(input.values, 2, axis=-1), parents=(input,))

    def backward(grad):
        input.grad += grad[..., 0::2] + grad[..., 1::2]

    out._backward_fn = backward
    return out


def channel_slice(input: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= input.depth:
        raise ShapeError(f"channel slice [{start}:{stop}] outside depth {input.depth}")
    out = Tensor(input.values[..., start:stop, :], parents=(input,))

    def backward(grad):
        input.grad[..., start:stop, :] += grad

    out._backward_fn = backward
    return out


def add(*terms: Tensor) -> Tensor:
    """Sum of same-shaped tensors (typically scalar loss terms)."""
    shape = terms[0].shape
    if any(t.shape != shape for t in terms):
        raise ShapeError("add() needs tensors of identical shape")
    out = Tensor(sum(t.values for t in terms), parents=terms)

    def backward(grad):
        for t in terms:
            t.grad += grad

    out._backward_fn = backward
    return out


def scale(input: Tensor, factor: float) -> Tensor:
    out = Tensor(input.values * factor, parents=(input,))

    def backward(grad):
        input.grad += grad * factor

    out._backward_fn = backward
    return out


# ---------------------------------------------------------------------------
# Losses


def softmax(logits: np.ndarray, axis: int = -2) -> np.ndarray:
    """Softmax along the depth axis with max subtraction."""
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels, class_weights=None) -> Tensor:
    """Mean over samples of ``-w[label] * log softmax(logits)[label]``."""
    z = logits.values
    n_classes = logits.depth
    labels = np.asarray(labels)
    if labels.shape != z.shape[:-2] + z.shape[-1:]:
        raise ShapeError(f"labels shape {labels.shape} does not match logits {z.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise LabelError("labels must be integer class indices")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"label outside [0, {n_classes})")
    if class_weights is None:
        class_weights = np.ones(n_classes)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if class_weights.shape != (n_classes,) or np.any(class_weights <= 0):
        raise ConfigurationError("class_weights must be positive with one entry per class")

    shifted = z - z.max(axis=-2, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-2, keepdims=True))
    log_probs = shifted - log_norm
    onehot = np.moveaxis(np.eye(n_classes)[labels], -1, -2)
    sample_w = class_weights[labels]
    count = labels.size
    loss = -(sample_w * (onehot * log_probs).sum(axis=-2)).sum() / count

    def backward(grad):
        probs = np.exp(log_probs)
        logits.grad += grad * (probs - onehot) * sample_w[..., None, :] / count

    return _scalar(loss, (logits,), backward)


def _check_same(a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")


def l2_loss(prediction: Tensor, target: Tensor) -> Tensor:
    _check_same(prediction, target)
    diff = prediction.values - target.values
    n = diff.size

    def backward(grad):
        prediction.grad += grad * 2.0 * diff / n
        target.grad -= grad * 2.0 * diff / n

    return _scalar(np.mean(diff * diff), (prediction, target), backward)


def l1_loss(prediction: Tensor, target: Tensor) -> Tensor:
    _check_same(prediction, target)
    diff = prediction.values - target.values
    n = diff.size
    sign = np.sign(diff)  # subgradient 0 at a zero residual

    def backward(grad):
        prediction.grad += grad * sign / n
        target.grad -= grad * sign / n

    return _scalar(np.mean(np.abs(diff)), (prediction, target), backward)


def kl_standard_normal(mean: Tensor, log_variance: Tensor) -> Tensor:
    """Mean over entries of KL(N(mean, exp(log_variance)) || N(0, 1))."""
    _check_same(mean, log_variance)
    m, lv = mean.values, log_variance.values
    var = np.exp(lv)
    n = m.size
    # expm1 keeps the lv ~ 0 regime exact; the entry is exactly 0 at (0, 0)
    per_entry = 0.5 * (np.expm1(lv) - lv + m * m)

    def backward(grad):
        mean.grad += grad * m / n
        log_variance.grad += grad * 0.5 * (var - 1.0) / n

    return _scalar(per_entry.mean(), (mean, log_variance), backward)


def reparameterize(mean: Tensor, log_variance: Tensor, rng: np.random.Generator | None = None, noise=None) -> Tensor:
    """``z = mean + exp(0.5 * log_variance) * eps`` with eps ~ N(0, 1).

    Pass ``noise`` to freeze eps (gradient checks); otherwise it is drawn from ``rng``.
    """
    _check_same(mean, log_variance)
    if noise is None:
        if rng is None:
            raise ConfigurationError("reparameterize needs an rng or explicit noise")
        noise = rng.standard_normal(mean.shape)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != mean.shape:
        raise ShapeError("noise shape must match mean")
    std = np.exp(0.5 * log_variance.values)
    out = Tensor(mean.values + std * noise, parents=(mean, log_variance))

    def backward(grad):
        mean.grad += grad
        log_variance.grad += grad * 0.5 * std * noise

    out._backward_fn = backward
    out.noise = noise
    return out
