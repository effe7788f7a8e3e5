"""Minimal deterministic CNN core with hand-written backward passes.

Layers hold their parameters as NumPy arrays that optimizers and the TRP
loop update *in place*, so momentum buffers keyed by parameter name stay
attached to the same storage across rank-pruning steps.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ValidationError


def _pair(v):
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def conv_output_hw(h, w, kh, kw, stride, padding):
    (sh, sw), (ph, pw) = _pair(stride), _pair(padding)
    return (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1


def _check_conv(x, w, stride, padding):
    if x.ndim != 4 or w.ndim != 4:
        raise ValidationError(f"conv2d expects 4-D input and filters, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValidationError(
            f"conv2d channel mismatch: input has {x.shape[1]}, filters expect {w.shape[1]}")
    (sh, sw), (ph, pw) = stride, padding
    if sh < 1 or sw < 1 or ph < 0 or pw < 0:
        raise ValidationError(f"invalid stride {stride} / padding {padding}")
    oh, ow = conv_output_hw(x.shape[2], x.shape[3], w.shape[2], w.shape[3], stride, padding)
    if oh < 1 or ow < 1:
        raise ValidationError(f"conv2d output would be empty for input {x.shape}, kernel {w.shape}")


def _conv_forward(x, w, bias, stride, padding):
    n, c, kh, kw = w.shape
    cols = kernels.im2col(x, kh, kw, stride, padding)
    b, oh, ow, k = cols.shape
    out = cols.reshape(-1, k) @ w.reshape(n, k).T
    if bias is not None:
        out += bias
    return np.ascontiguousarray(out.reshape(b, oh, ow, n).transpose(0, 3, 1, 2)), cols


def _conv_backward(grad_out, cols, x_shape, w, stride, padding):
    n, c, kh, kw = w.shape
    b, oh, ow, k = cols.shape
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, n)
    grad_w = (g.T @ cols.reshape(-1, k)).reshape(w.shape)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    gcols = (g @ w.reshape(n, k)).reshape(b, oh, ow, k)
    grad_x = kernels.col2im(gcols, x_shape, kh, kw, stride, padding)
    return grad_x, grad_w, grad_b


def conv2d_forward(x, w, bias=None, stride=1, padding=0):
    """Cross-correlation with zero padding; ``x`` is (b, c, h, w), ``w`` is (n, c, kh, kw)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    stride, padding = _pair(stride), _pair(padding)
    _check_conv(x, w, stride, padding)
    return _conv_forward(x, w, bias, stride, padding)[0]


def conv2d_backward(grad_out, x, w, stride=1, padding=0):
    """Returns ``(grad_input, grad_w, grad_bias)`` for :func:`conv2d_forward`."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    stride, padding = _pair(stride), _pair(padding)
    _check_conv(x, w, stride, padding)
    oh, ow = conv_output_hw(x.shape[2], x.shape[3], w.shape[2], w.shape[3], stride, padding)
    expected = (x.shape[0], w.shape[0], oh, ow)
    if grad_out.shape != expected:
        raise ValidationError(f"grad_out shape {grad_out.shape} != forward output {expected}")
    cols = kernels.im2col(x, w.shape[2], w.shape[3], stride, padding)
    return _conv_backward(np.asarray(grad_out, dtype=np.float64), cols, x.shape, w, stride, padding)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ValidationError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValidationError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(b)
    loss = float(np.mean(logsum - z[rows, labels]))
    p = np.exp(z - logsum[:, None])
    p[rows, labels] -= 1.0
    return loss, p / b


# --------------------------------------------------------------------------
# layers
# --------------------------------------------------------------------------

class Layer:
    kind = ""

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def params(self):
        """Ordered ``{name: array}`` of trainable parameters."""
        return {}

    def grads(self):
        return {}

    def describe(self):
        return {"kind": self.kind}

    def output_shape(self, in_shape):
        return in_shape


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, weight, bias=None, stride=1, padding=0):
        self.weight = np.asarray(weight, dtype=np.float64)
        if self.weight.ndim != 4:
            raise ValidationError(f"conv weight must be 4-D, got {self.weight.shape}")
        self.bias = None if bias is None else np.asarray(bias, dtype=np.float64)
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ValidationError(f"conv bias shape {self.bias.shape} != ({self.weight.shape[0]},)")
        self.stride = _pair(stride)
        self.padding = _pair(padding)
        if min(self.stride) < 1 or min(self.padding) < 0:
            raise ValidationError(f"invalid stride {self.stride} / padding {self.padding}")
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = None if self.bias is None else np.zeros_like(self.bias)
        self._cache = None

    @property
    def kernel(self):
        return self.weight.shape[2], self.weight.shape[3]

    def forward(self, x):
        _check_conv(x, self.weight, self.stride, self.padding)
        out, cols = _conv_forward(x, self.weight, self.bias, self.stride, self.padding)
        self._cache = (cols, x.shape)
        return out

    def backward(self, grad):
        cols, x_shape = self._cache
        gx, gw, gb = _conv_backward(grad, cols, x_shape, self.weight, self.stride, self.padding)
        self.grad_weight = gw
        if self.bias is not None:
            self.grad_bias = gb
        return gx

    def params(self):
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p

    def grads(self):
        g = {"weight": self.grad_weight}
        if self.bias is not None:
            g["bias"] = self.grad_bias
        return g

    def describe(self):
        n, c, kh, kw = self.weight.shape
        return {"kind": self.kind, "in_channels": c, "out_channels": n,
                "kernel": [kh, kw], "stride": list(self.stride),
                "padding": list(self.padding), "bias": self.bias is not None}

    def output_shape(self, in_shape):
        c, h, w = in_shape
        oh, ow = conv_output_hw(h, w, *self.kernel, self.stride, self.padding)
        return self.weight.shape[0], oh, ow


class Linear(Layer):
    kind = "linear"

    def __init__(self, weight, bias=None):
        self.weight = np.asarray(weight, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ValidationError(f"linear weight must be 2-D, got {self.weight.shape}")
        self.bias = None if bias is None else np.asarray(bias, dtype=np.float64)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = None if self.bias is None else np.zeros_like(self.bias)
        self._x = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[1]:
            raise ValidationError(
                f"linear expects (b, {self.weight.shape[1]}) input, got {x.shape}")
        self._x = x
        out = x @ self.weight.T
        if self.bias is not None:
            out += self.bias
        return out

    def backward(self, grad):
        self.grad_weight = grad.T @ self._x
        if self.bias is not None:
            self.grad_bias = grad.sum(axis=0)
        return grad @ self.weight

    def params(self):
        p = {"weight": self.weight}
        if self.bias is not None:
            p["bias"] = self.bias
        return p

    def grads(self):
        g = {"weight": self.grad_weight}
        if self.bias is not None:
            g["bias"] = self.grad_bias
        return g

    def describe(self):
        out_f, in_f = self.weight.shape
        return {"kind": self.kind, "in_features": in_f, "out_features": out_f,
                "bias": self.bias is not None}

    def output_shape(self, in_shape):
        return (self.weight.shape[0],)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2. Ties go to the first element in row-major order."""

    kind = "maxpool2x2"

    def forward(self, x):
        if x.shape[2] < 2 or x.shape[3] < 2:
            raise ValidationError(f"maxpool2x2 needs spatial dims >= 2, got {x.shape}")
        out, self._arg = kernels.maxpool2x2_forward(np.ascontiguousarray(x))
        self._shape = x.shape
        return out

    def backward(self, grad):
        return kernels.maxpool2x2_backward(np.ascontiguousarray(grad), self._arg, self._shape)

    def output_shape(self, in_shape):
        c, h, w = in_shape
        return c, h // 2, w // 2


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class Model:
    """An ordered stack of layers evaluated front to back."""

    def __init__(self, layers, name="model", input_shape=None):
        self.layers = list(layers)
        self.name = name
        self.input_shape = None if input_shape is None else tuple(input_shape)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params().items():
                out[f"layers.{i}.{k}"] = v
        return out

    def named_grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.grads().items():
                out[f"layers.{i}.{k}"] = v
        return out

    def predict(self, x, batch_size=500):
        preds = []
        for s in range(0, x.shape[0], batch_size):
            preds.append(np.argmax(self.forward(x[s:s + batch_size]), axis=1))
        return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)

    def accuracy(self, x, y, batch_size=500):
        return float(np.mean(self.predict(x, batch_size) == y))

    def describe(self):
        return [layer.describe() for layer in self.layers]


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------

@dataclass
class SgdState:
    """Heavy-ball SGD: ``v <- mu*v + (g + wd*w)``, ``w <- w - lr*v``."""

    lr: float
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0.0:
            raise ValidationError(f"learning rate must be positive, got {self.lr}")


def sgd_step(params, grads, state):
    """Update every array in ``params`` in place; velocities live in ``state``."""
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValidationError(f"gradient shape {g.shape} != parameter shape {w.shape} for {name}")
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(w)
        v *= state.momentum
        v += g + state.weight_decay * w
        w -= state.lr * v
