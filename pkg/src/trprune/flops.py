"""Multiply-accumulate accounting for original and factorized models.

One MAC counts as one FLOP. ReLU, pooling and flatten are free. The
reported speedup is ``total_original / total_factorized``.
"""
from dataclasses import asdict, dataclass, field

from .errors import ValidationError
from .models import ModelSpec, _descriptor_output
from .nn import conv_output_hw


@dataclass
class LayerFlops:
    index: int
    kind: str
    original_macs: int
    factorized_macs: int
    original_params: int
    factorized_params: int
    rank: int = None


@dataclass
class FlopsReport:
    layers: list = field(default_factory=list)
    total_original: int = 0
    total_factorized: int = 0
    params_original: int = 0
    params_factorized: int = 0

    @property
    def speedup(self):
        return self.total_original / self.total_factorized

    def to_dict(self):
        d = asdict(self)
        d["speedup"] = self.speedup
        return d


def conv_macs(n, c, kh, kw, out_h, out_w):
    return n * c * kh * kw * out_h * out_w


def channel_factorized_macs(n, c, kh, kw, r, out_h, out_w):
    return r * c * kh * kw * out_h * out_w + n * r * out_h * out_w


def spatial_factorized_macs(n, c, kh, kw, r, mid_h, mid_w, out_h, out_w):
    return r * c * kh * mid_h * mid_w + n * r * kw * out_h * out_w


def _conv_entry(i, d, shape, scheme, rank):
    n, c = d["out_channels"], d["in_channels"]
    kh, kw = d["kernel"]
    (sh, sw), (ph, pw) = d["stride"], d["padding"]
    oh, ow = conv_output_hw(shape[1], shape[2], kh, kw, (sh, sw), (ph, pw))
    bias = n if d.get("bias", True) else 0
    orig = conv_macs(n, c, kh, kw, oh, ow)
    orig_p = n * c * kh * kw + bias
    if rank is None:
        return LayerFlops(i, d["kind"], orig, orig, orig_p, orig_p)
    if scheme == "channel":
        fact = channel_factorized_macs(n, c, kh, kw, rank, oh, ow)
        fact_p = rank * c * kh * kw + n * rank + bias
    elif scheme == "spatial":
        mh, mw = conv_output_hw(shape[1], shape[2], kh, 1, (sh, 1), (ph, 0))
        fact = spatial_factorized_macs(n, c, kh, kw, rank, mh, mw, oh, ow)
        fact_p = rank * c * kh + n * rank * kw + bias
    else:
        raise ValidationError(f"unknown scheme {scheme!r}")
    return LayerFlops(i, d["kind"], orig, fact, orig_p, fact_p, rank)


def count_flops(spec, input_shape=None, scheme=None, ranks=None):
    """MAC counts per layer for ``spec`` and a factorized variant.

    Layers already stored as ``factorized_conv`` are costed from their own
    rank and scheme. For plain convs, ``ranks`` (``{layer_index: r}``)
    together with ``scheme`` prices a hypothetical factorization; convs
    without an entry cost the same in both totals.
    """
    if not isinstance(spec, ModelSpec):
        raise ValidationError("count_flops expects a ModelSpec")
    shape = tuple(spec.input_shape if input_shape is None else input_shape)
    ranks = ranks or {}
    report = FlopsReport()
    for i, d in enumerate(spec.layers):
        kind = d["kind"]
        if kind == "conv2d":
            entry = _conv_entry(i, d, shape, scheme, ranks.get(i))
        elif kind == "factorized_conv":
            entry = _conv_entry(i, d, shape, d["scheme"], d["rank"])
        elif kind == "linear":
            macs = d["in_features"] * d["out_features"]
            p = macs + (d["out_features"] if d.get("bias", True) else 0)
            entry = LayerFlops(i, kind, macs, macs, p, p)
        else:
            entry = None
        shape = _descriptor_output(d, shape, i)
        if entry is not None:
            report.layers.append(entry)
            report.total_original += entry.original_macs
            report.total_factorized += entry.factorized_macs
            report.params_original += entry.original_params
            report.params_factorized += entry.factorized_params
    if report.total_factorized <= 0:
        raise ValidationError("model has no compute layers")
    return report
