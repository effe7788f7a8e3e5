import math

import numpy as np
import pytest

from trprune.errors import ValidationError
from trprune.lowrank import factorize
from trprune.nn import (Conv2d, Flatten, Linear, MaxPool2x2, Model, ReLU, SgdState,
                        conv2d_backward, conv2d_forward, sgd_step, softmax_cross_entropy)

from oracles import conv_naive, numeric_grad, rel_err


def test_conv_all_ones():
    out = conv2d_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 9.0


def test_conv_identity_filter():
    x = np.random.default_rng(0).standard_normal((2, 3, 5, 4))
    w = np.eye(3).reshape(3, 3, 1, 1)
    np.testing.assert_array_equal(conv2d_forward(x, w), x)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), ((2, 1), (0, 2))])
def test_conv_against_naive(stride, pad):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 7, 8))
    w = rng.standard_normal((4, 3, 3, 2))
    b = rng.standard_normal(4)
    s = stride if isinstance(stride, tuple) else (stride, stride)
    p = pad if isinstance(pad, tuple) else (pad, pad)
    assert np.abs(conv2d_forward(x, w, b, stride, pad) - conv_naive(x, w, b, s, p)).max() <= 1e-12


def test_conv_rejects_mismatch():
    with pytest.raises(ValidationError):
        conv2d_forward(np.ones((1, 2, 5, 5)), np.ones((1, 3, 3, 3)))
    with pytest.raises(ValidationError):
        conv2d_forward(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)))


def test_conv_backward_zero_and_bias():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 2, 5, 5))
    w = rng.standard_normal((2, 2, 3, 3))
    gx, gw, gb = conv2d_backward(np.zeros((2, 2, 3, 3)), x, w)
    assert not gx.any() and not gw.any() and not gb.any()
    go = rng.standard_normal((2, 2, 3, 3))
    _, _, gb = conv2d_backward(go, x, w)
    np.testing.assert_allclose(gb, go.sum(axis=(0, 2, 3)), rtol=1e-14)


def _check_layer(layer, x, rng, tol=1e-6):
    """Finite-difference check of a layer on the scalar sum(forward(x) * r)."""
    r = rng.standard_normal(layer.forward(x).shape)

    def f():
        return float(np.sum(layer.forward(x) * r))

    layer.forward(x)
    gx = layer.backward(r)
    assert rel_err(gx, numeric_grad(f, x)) <= tol
    for name, p in layer.params().items():
        layer.forward(x)
        layer.backward(r)
        analytic = layer.grads()[name].copy()
        assert rel_err(analytic, numeric_grad(f, p)) <= tol, name


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv_layer_gradients(stride, pad):
    rng = np.random.default_rng(3)
    layer = Conv2d(rng.standard_normal((2, 2, 3, 3)), rng.standard_normal(2), stride, pad)
    _check_layer(layer, rng.standard_normal((2, 2, 6, 5)), rng)


def test_linear_gradients_and_identity():
    rng = np.random.default_rng(4)
    _check_layer(Linear(rng.standard_normal((3, 5)), rng.standard_normal(3)),
                 rng.standard_normal((4, 5)), rng)
    x = rng.standard_normal((2, 4))
    np.testing.assert_array_equal(Linear(np.eye(4), np.zeros(4)).forward(x), x)


def test_relu():
    layer = ReLU()
    np.testing.assert_array_equal(layer.forward(np.array([[-1.0, 2.0]])), [[0.0, 2.0]])
    np.testing.assert_array_equal(layer.backward(np.array([[5.0, 7.0]])), [[0.0, 7.0]])
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 7))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    _check_layer(layer, x, rng)


def test_maxpool_and_flatten_gradients():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 6, 5))  # odd width drops the last column
    pool = MaxPool2x2()
    assert pool.forward(x).shape == (2, 3, 3, 2)
    _check_layer(pool, x, rng)
    _check_layer(Flatten(), rng.standard_normal((2, 3, 2, 2)), rng)


def test_factorized_conv_gradients():
    rng = np.random.default_rng(7)
    for scheme in ("channel", "spatial"):
        fc = factorize(rng.standard_normal((3, 2, 3, 3)), scheme, 0.1, rng.standard_normal(3), 1, 1)
        _check_layer(fc, rng.standard_normal((2, 2, 5, 5)), rng)


def test_loss_examples():
    loss, g = softmax_cross_entropy(np.zeros((3, 10)), np.array([0, 4, 9]))
    assert loss == pytest.approx(math.log(10), abs=1e-15)
    np.testing.assert_allclose(g.sum(axis=1), 0, atol=1e-12)
    logits = np.zeros((1, 5))
    logits[0, 2] = 1e3
    loss, _ = softmax_cross_entropy(logits, np.array([2]))
    assert 0.0 <= loss <= 1e-12


def test_loss_gradient_fd():
    rng = np.random.default_rng(8)
    z = rng.standard_normal((4, 6)) * 3
    y = np.array([0, 5, 2, 2])
    loss, g = softmax_cross_entropy(z, y)
    assert loss >= 0
    np.testing.assert_allclose(g.sum(axis=1), 0, atol=1e-12)
    assert rel_err(g, numeric_grad(lambda: softmax_cross_entropy(z, y)[0], z)) <= 1e-6


def test_loss_rejects_bad_labels():
    with pytest.raises(ValidationError):
        softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))


def _tiny_model(rng):
    return Model([Conv2d(rng.standard_normal((3, 1, 3, 3)) * 0.5, rng.standard_normal(3), 1, 1),
                  ReLU(), MaxPool2x2(), Flatten(),
                  Linear(rng.standard_normal((4, 27)) * 0.3, rng.standard_normal(4))])


def test_model_end_to_end_gradient():
    rng = np.random.default_rng(9)
    model = _tiny_model(rng)
    x = rng.standard_normal((3, 1, 6, 6))
    y = np.array([0, 3, 1])

    def f():
        return softmax_cross_entropy(model.forward(x), y)[0]

    _, g = softmax_cross_entropy(model.forward(x), y)
    model.backward(g)
    grads = {k: v.copy() for k, v in model.named_grads().items()}
    for name, p in model.named_params().items():
        assert rel_err(grads[name], numeric_grad(f, p)) <= 1e-6, name


def test_batch_consistency():
    rng = np.random.default_rng(10)
    model = _tiny_model(rng)
    x = rng.standard_normal((5, 1, 6, 6))
    whole = model.forward(x)
    single = np.concatenate([model.forward(x[i:i + 1]) for i in range(5)])
    assert np.abs(whole - single).max() <= 1e-12
    assert model.forward(x).tobytes() == whole.tobytes()


# --- optimizer ----------------------------------------------------------

def test_sgd_vanilla_step():
    w = np.array([1.0])
    sgd_step({"w": w}, {"w": np.array([0.5])}, SgdState(0.1, momentum=0.0, weight_decay=0.0))
    assert w[0] == pytest.approx(0.95, abs=1e-15)


def test_sgd_zero_grads():
    w = np.array([1.0, -2.0])
    st = SgdState(0.1, momentum=0.9, weight_decay=0.0)
    sgd_step({"w": w}, {"w": np.zeros(2)}, st)
    np.testing.assert_array_equal(w, [1.0, -2.0])
    # an existing velocity decays by mu (and, being nonzero, still moves w)
    st.velocity["w"][:] = [1.0, 1.0]
    sgd_step({"w": w}, {"w": np.zeros(2)}, st)
    np.testing.assert_allclose(st.velocity["w"], [0.9, 0.9], rtol=1e-15)


def test_sgd_two_steps_scalar_recurrence():
    lr, mu, wd = 0.1, 0.9, 1e-2
    w0, g1, g2 = 2.0, 0.3, -0.7
    v1 = g1 + wd * w0
    w1 = w0 - lr * v1
    v2 = mu * v1 + g2 + wd * w1
    w2 = w1 - lr * v2
    w = np.array([w0])
    st = SgdState(lr, mu, wd)
    sgd_step({"w": w}, {"w": np.array([g1])}, st)
    sgd_step({"w": w}, {"w": np.array([g2])}, st)
    assert w[0] == pytest.approx(w2, abs=1e-15)
    assert st.velocity["w"][0] == pytest.approx(v2, abs=1e-15)


def test_sgd_rejects_bad_state():
    with pytest.raises(ValidationError):
        SgdState(0.0)
    with pytest.raises(ValidationError):
        sgd_step({"w": np.ones(2)}, {"w": np.ones(3)}, SgdState(0.1))
