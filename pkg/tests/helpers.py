"""Builders shared by several test modules."""
import numpy as np

from trprune.lowrank import build_factorized
from trprune.models import build_model, model_zoo
from trprune.nn import Conv2d, Model


def factorized_tiny_cnn(scheme, ranks=(4, 8), seed=0):
    """tiny-cnn on 1x28x28 with both convs replaced by random factor pairs of fixed rank."""
    model = build_model(model_zoo("tiny-cnn"), seed)
    rng = np.random.default_rng(seed)
    layers = list(model.layers)
    convs = [i for i, layer in enumerate(layers) if isinstance(layer, Conv2d)]
    for i, r in zip(convs, ranks):
        conv = layers[i]
        n, c, kh, kw = conv.weight.shape
        if scheme == "channel":
            a, b = (r, c, kh, kw), (n, r, 1, 1)
        else:
            a, b = (r, c, kh, 1), (n, r, 1, kw)
        layers[i] = build_factorized(rng.standard_normal(a) * 0.1, rng.standard_normal(b) * 0.1,
                                     conv.bias.copy(), scheme, (kh, kw), conv.stride, conv.padding)
    return Model(layers, model.name, model.input_shape)
