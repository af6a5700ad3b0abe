"""Independent oracles used by the test-suite."""

import numpy as np

from gazeconv.tensor import Tensor

FD_STEP = 1e-4
FD_RTOL = 1e-4
FD_ATOL = 1e-8


def naive_conv1d(x, weight, bias, padding="same"):
    """Direct nested-loop 1D convolution over (depth, height) input."""
    out_depth, in_depth, k = weight.shape
    height = x.shape[1]
    if padding == "same":
        left = (k - 1) // 2
        padded = np.zeros((in_depth, height + k - 1))
        padded[:, left:left + height] = x
        out_height = height
    else:
        padded = x
        out_height = height - k + 1
    out = np.zeros((out_depth, out_height))
    for o in range(out_depth):
        for h in range(out_height):
            acc = bias[o]
            for d in range(in_depth):
                for j in range(k):
                    acc += weight[o, d, j] * padded[d, h + j]
            out[o, h] = acc
    return out


def numeric_gradient(f, array, step=FD_STEP):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``array`` (mutated in place)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        up = f()
        flat[i] = old - step
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2 * step)
    return grad


def assert_grad_close(analytic, numeric, rtol=FD_RTOL, atol=FD_ATOL, mask=None):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    err = np.abs(analytic - numeric)
    bound = rtol * np.maximum(np.abs(analytic), np.abs(numeric)) + atol
    ok = err <= bound
    if mask is not None:
        ok = ok | ~mask
    assert ok.all(), f"max violation {np.max(err - bound):.3e}; analytic={analytic[~ok][:5]} numeric={numeric[~ok][:5]}"


def check_gradients(build, arrays, layers=(), rng=None, masks=None):
    """Compare tape gradients with central differences.

    ``build(*tensors)`` returns a Tensor; a random projection turns it into a
    scalar. Checks every entry of ``arrays`` and every weight/bias of ``layers``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a) for a in arrays]
    for layer in layers:
        layer.zero_grad()
    out = build(*tensors)
    proj = rng.normal(size=out.shape) if out.values.ndim else 1.0
    out.backward(proj)

    def scalar():
        return float(np.sum(build(*[Tensor(a) for a in arrays]).values * proj))

    masks = masks or [None] * len(arrays)
    for a, t, m in zip(arrays, tensors, masks):
        assert_grad_close(t.grad, numeric_gradient(scalar, a), mask=m)
    for layer in layers:
        weight_analytic = layer.weight_grad.copy()
        bias_analytic = layer.bias_grad.copy()
        assert_grad_close(weight_analytic, numeric_gradient(scalar, layer.weight))
        assert_grad_close(bias_analytic, numeric_gradient(scalar, layer.bias))
