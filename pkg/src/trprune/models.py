"""Desk-scale model zoo and model construction from layer descriptors."""
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .nn import Conv2d, Flatten, Linear, MaxPool2x2, Model, ReLU, conv_output_hw


@dataclass(frozen=True)
class ModelSpec:
    """Architecture only: a name, an input shape ``(c, h, w)`` and layer descriptors."""

    name: str
    input_shape: tuple
    layers: tuple
    num_classes: int

    def shapes(self):
        """Validate the shape chain; return the output shape of every layer."""
        shape = tuple(self.input_shape)
        out = []
        for i, d in enumerate(self.layers):
            shape = _descriptor_output(d, shape, i)
            out.append(shape)
        if not self.layers or self.layers[-1]["kind"] != "linear":
            raise ValidationError(f"{self.name}: last layer must be linear")
        if shape != (self.num_classes,):
            raise ValidationError(
                f"{self.name}: produces {shape[0]} logits, expected {self.num_classes}")
        return out


def _descriptor_output(d, shape, i):
    kind = d.get("kind")
    if kind in ("conv2d", "factorized_conv"):
        if len(shape) != 3 or shape[0] != d["in_channels"]:
            raise ValidationError(f"layer {i} ({kind}) expects {d['in_channels']} channels, got {shape}")
        oh, ow = conv_output_hw(shape[1], shape[2], *d["kernel"], d["stride"], d["padding"])
        if oh < 1 or ow < 1:
            raise ValidationError(f"layer {i} ({kind}) output is empty for input {shape}")
        return d["out_channels"], oh, ow
    if kind == "relu":
        return shape
    if kind == "maxpool2x2":
        if len(shape) != 3 or shape[1] < 2 or shape[2] < 2:
            raise ValidationError(f"layer {i} (maxpool2x2) cannot pool shape {shape}")
        return shape[0], shape[1] // 2, shape[2] // 2
    if kind == "flatten":
        return (int(np.prod(shape)),)
    if kind == "linear":
        if shape != (d["in_features"],):
            raise ValidationError(f"layer {i} (linear) expects {d['in_features']} features, got {shape}")
        return (d["out_features"],)
    raise ValidationError(f"layer {i}: unknown layer kind {kind!r}")


def _conv(c, n, k, pad):
    return {"kind": "conv2d", "in_channels": c, "out_channels": n, "kernel": [k, k],
            "stride": [1, 1], "padding": [pad, pad], "bias": True}


def _linear(i, o):
    return {"kind": "linear", "in_features": i, "out_features": o, "bias": True}


def _tiny_cnn(input_shape):
    c = input_shape[0]
    return [_conv(c, 16, 5, 0), {"kind": "relu"}, {"kind": "maxpool2x2"},
            _conv(16, 32, 5, 0), {"kind": "relu"}, {"kind": "maxpool2x2"},
            {"kind": "flatten"}]


def _micro_cnn(input_shape):
    c = input_shape[0]
    return [_conv(c, 8, 3, 1), {"kind": "relu"}, {"kind": "maxpool2x2"}, {"kind": "flatten"}]


MODELS = {"tiny-cnn": _tiny_cnn, "micro-cnn": _micro_cnn}


def model_zoo(name, input_shape=(1, 28, 28), num_classes=10):
    """Return the validated :class:`ModelSpec` for a named architecture.

    ``tiny-cnn``: conv 16@5x5 - relu - pool - conv 32@5x5 - relu - pool - linear.
    ``micro-cnn``: conv 8@3x3 (pad 1) - relu - pool - linear.
    """
    if name not in MODELS:
        raise ValidationError(f"unknown model {name!r}; available: {', '.join(sorted(MODELS))}")
    input_shape = tuple(int(v) for v in input_shape)
    body = MODELS[name](input_shape)
    # size the classifier from the feature shape the body produces
    shape = input_shape
    for i, d in enumerate(body):
        shape = _descriptor_output(d, shape, i)
    spec = ModelSpec(name, input_shape, tuple(body) + (_linear(shape[0], num_classes),), num_classes)
    spec.shapes()
    return spec


def build_model(spec, seed=0):
    """Instantiate a spec with fan-in scaled uniform weights, U(+-1/sqrt(fan_in)), and zero biases."""
    spec.shapes()
    rng = np.random.default_rng(seed)
    layers = []
    for d in spec.layers:
        kind = d["kind"]
        if kind == "conv2d":
            kh, kw = d["kernel"]
            fan_in = d["in_channels"] * kh * kw
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(d["out_channels"], d["in_channels"], kh, kw))
            b = np.zeros(d["out_channels"]) if d.get("bias", True) else None
            layers.append(Conv2d(w, b, d["stride"], d["padding"]))
        elif kind == "linear":
            bound = 1.0 / np.sqrt(d["in_features"])
            w = rng.uniform(-bound, bound, size=(d["out_features"], d["in_features"]))
            b = np.zeros(d["out_features"]) if d.get("bias", True) else None
            layers.append(Linear(w, b))
        elif kind == "factorized_conv":
            raise ValidationError("factorized layers are produced by export, not initialized")
        else:
            layers.append(_stateless(kind))
    return Model(layers, spec.name, spec.input_shape)


def _stateless(kind):
    return {"relu": ReLU, "maxpool2x2": MaxPool2x2, "flatten": Flatten}[kind]()


def spec_of(model, num_classes=None):
    layers = tuple(model.describe())
    if num_classes is None:
        num_classes = layers[-1].get("out_features", 0)
    return ModelSpec(model.name, tuple(model.input_shape), layers, num_classes)


def param_shapes(descriptors):
    """Expected ``{name: shape}`` for every parameter slot of a descriptor list."""
    shapes = {}
    for i, d in enumerate(descriptors):
        kind = d["kind"]
        if kind == "conv2d":
            kh, kw = d["kernel"]
            shapes[f"layers.{i}.weight"] = (d["out_channels"], d["in_channels"], kh, kw)
            if d.get("bias", True):
                shapes[f"layers.{i}.bias"] = (d["out_channels"],)
        elif kind == "linear":
            shapes[f"layers.{i}.weight"] = (d["out_features"], d["in_features"])
            if d.get("bias", True):
                shapes[f"layers.{i}.bias"] = (d["out_features"],)
        elif kind == "factorized_conv":
            r, n, c = d["rank"], d["out_channels"], d["in_channels"]
            kh, kw = d["kernel"]
            if d["scheme"] == "channel":
                shapes[f"layers.{i}.first.weight"] = (r, c, kh, kw)
                shapes[f"layers.{i}.second.weight"] = (n, r, 1, 1)
            else:
                shapes[f"layers.{i}.first.weight"] = (r, c, kh, 1)
                shapes[f"layers.{i}.second.weight"] = (n, r, 1, kw)
            if d.get("bias", True):
                shapes[f"layers.{i}.second.bias"] = (n,)
    return shapes


def model_from_tensors(spec, tensors):
    """Rebuild a model from descriptors plus a ``{name: array}`` mapping."""
    from .lowrank import build_factorized

    spec.shapes()
    layers = []
    for i, d in enumerate(spec.layers):
        kind = d["kind"]
        pre = f"layers.{i}."
        if kind == "conv2d":
            layers.append(Conv2d(tensors[pre + "weight"], tensors.get(pre + "bias"),
                                 d["stride"], d["padding"]))
        elif kind == "linear":
            layers.append(Linear(tensors[pre + "weight"], tensors.get(pre + "bias")))
        elif kind == "factorized_conv":
            layers.append(build_factorized(
                tensors[pre + "first.weight"], tensors[pre + "second.weight"],
                tensors.get(pre + "second.bias"), d["scheme"], d["kernel"],
                d["stride"], d["padding"]))
        else:
            layers.append(_stateless(kind))
    return Model(layers, spec.name, spec.input_shape)
