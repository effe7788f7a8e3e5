"""Filter matricization, the rank-pruning operator, and factorized convolutions.

Two matricizations of an ``(n, c, kh, kw)`` filter bank are supported:

``channel``
    ``n x (c*kh*kw)``; column index ``(ci*kh + hi)*kw + wi``. Factorizes
    into an ``r``-filter ``kh x kw`` conv followed by an ``n``-filter 1x1 conv.
``spatial``
    ``(c*kh) x (kw*n)``; row ``ci*kh + hi``, column ``wi*n + ni``.
    Factorizes into an ``r``-filter ``kh x 1`` conv followed by an
    ``n``-filter ``1 x kw`` conv.
"""
from enum import Enum

import numpy as np

from . import linalg
from .errors import DegenerateRankError, ValidationError
from .nn import Conv2d, Layer, _pair


class Scheme(str, Enum):
    CHANNEL = "channel"
    SPATIAL = "spatial"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(
                f"unknown scheme {value!r}; expected 'channel' or 'spatial'") from None


def _as_filters(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4:
        raise ValidationError(f"expected a 4-D filter tensor, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValidationError("filter tensor contains NaN or Inf")
    return w


def matrix_shape(dims, scheme):
    n, c, kh, kw = dims
    if Scheme.parse(scheme) is Scheme.CHANNEL:
        return n, c * kh * kw
    return c * kh, kw * n


def matricize(w, scheme):
    w = _as_filters(w)
    n, c, kh, kw = w.shape
    if Scheme.parse(scheme) is Scheme.CHANNEL:
        return w.reshape(n, c * kh * kw).copy()
    return np.ascontiguousarray(w.transpose(1, 2, 3, 0)).reshape(c * kh, kw * n)


def dematricize(m, dims, scheme):
    m = np.asarray(m, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4:
        raise ValidationError(f"dims must have four entries, got {dims}")
    expected = matrix_shape(dims, scheme)
    if m.shape != expected:
        raise ValidationError(
            f"matrix shape {m.shape} does not match {Scheme.parse(scheme).value} "
            f"matricization {expected} of filters {dims}")
    n, c, kh, kw = dims
    if Scheme.parse(scheme) is Scheme.CHANNEL:
        return m.reshape(dims).copy()
    return np.ascontiguousarray(m.reshape(c, kh, kw, n).transpose(3, 0, 1, 2))


def rank_prune(w, scheme, e):
    """Project filters onto the energy-thresholded low-rank set.

    Returns ``(pruned, k)``. ``k`` may be 0 for an all-zero bank; callers that
    need a usable layer check for that themselves.
    """
    w = _as_filters(w)
    trunc, k = linalg.tsvd(matricize(w, scheme), e)
    return dematricize(trunc.reconstruct(), w.shape, scheme), k


class FactorizedConv(Layer):
    """Two stacked convolutions standing in for one ``(n, c, kh, kw)`` conv."""

    kind = "factorized_conv"

    def __init__(self, first, second, scheme, original_kernel):
        self.first = first
        self.second = second
        self.scheme = Scheme.parse(scheme)
        self.original_kernel = tuple(original_kernel)
        if self.rank < 1:
            raise DegenerateRankError("factorized conv needs rank >= 1")
        if second.weight.shape[1] != self.rank:
            raise ValidationError("second factor input channels must equal the rank")

    @property
    def rank(self):
        return self.first.weight.shape[0]

    @property
    def stride(self):
        return self.first.stride[0], self.second.stride[1]

    @property
    def padding(self):
        if self.scheme is Scheme.CHANNEL:
            return self.first.padding
        return self.first.padding[0], self.second.padding[1]

    def forward(self, x):
        return self.second.forward(self.first.forward(x))

    def backward(self, grad):
        return self.first.backward(self.second.backward(grad))

    def params(self):
        p = {f"first.{k}": v for k, v in self.first.params().items()}
        p.update({f"second.{k}": v for k, v in self.second.params().items()})
        return p

    def grads(self):
        g = {f"first.{k}": v for k, v in self.first.grads().items()}
        g.update({f"second.{k}": v for k, v in self.second.grads().items()})
        return g

    def describe(self):
        n = self.second.weight.shape[0]
        c = self.first.weight.shape[1]
        return {"kind": self.kind, "scheme": self.scheme.value, "rank": self.rank,
                "in_channels": c, "out_channels": n,
                "kernel": list(self.original_kernel), "stride": list(self.stride),
                "padding": list(self.padding), "bias": self.second.bias is not None}

    def output_shape(self, in_shape):
        return self.second.output_shape(self.first.output_shape(in_shape))

    def effective_weight(self):
        """The ``(n, c, kh, kw)`` filter bank this pair computes."""
        a, b = self.first.weight, self.second.weight
        if self.scheme is Scheme.CHANNEL:
            return np.einsum("nr,rchw->nchw", b[:, :, 0, 0], a)
        return np.einsum("rch,nrw->nchw", a[:, :, :, 0], b[:, :, 0, :])


def build_factorized(first_w, second_w, bias, scheme, original_kernel, stride, padding):
    """Wire two factor weight tensors into a :class:`FactorizedConv`.

    Stride and padding of the original conv are split between the factors:
    channel puts both on the first (kh x kw) factor; spatial puts the
    vertical part on the first factor and the horizontal part on the second.
    """
    scheme = Scheme.parse(scheme)
    (sh, sw), (ph, pw) = _pair(stride), _pair(padding)
    if scheme is Scheme.CHANNEL:
        first = Conv2d(first_w, None, (sh, sw), (ph, pw))
        second = Conv2d(second_w, bias, 1, 0)
    else:
        first = Conv2d(first_w, None, (sh, 1), (ph, 0))
        second = Conv2d(second_w, bias, (1, sw), (0, pw))
    return FactorizedConv(first, second, scheme, original_kernel)


def factorize(w, scheme, e, bias=None, stride=1, padding=0):
    """Split a filter bank into two convs via energy-thresholded TSVD.

    Singular values are divided as ``sqrt(sigma)`` onto each factor. The
    composed pair computes exactly the convolution with ``rank_prune(w)``.

    Raises
    ------
    DegenerateRankError
        Truncation kept no singular value (``k == 0``).
    """
    w = _as_filters(w)
    scheme = Scheme.parse(scheme)
    n, c, kh, kw = w.shape
    trunc, k = linalg.tsvd(matricize(w, scheme), e)
    if k == 0:
        raise DegenerateRankError(
            f"truncation at e={e} left rank 0 for filters of shape {w.shape}")
    root = np.sqrt(trunc.sigma)
    left = trunc.u * root            # rows x k
    right = root[:, None] * trunc.vt  # k x cols
    if scheme is Scheme.CHANNEL:
        first_w = right.reshape(k, c, kh, kw)
        second_w = left.reshape(n, k, 1, 1)
    else:
        first_w = left.T.reshape(k, c, kh, 1)
        second_w = right.reshape(k, kw, n).transpose(2, 0, 1).reshape(n, k, 1, kw)
    return build_factorized(np.ascontiguousarray(first_w), np.ascontiguousarray(second_w),
                            None if bias is None else np.array(bias, dtype=np.float64),
                            scheme, (kh, kw), stride, padding)
