import gzip
import os

import numpy as np
import pytest

from trprune import data
from trprune.data import (CIFAR_RECORD, load_cifar10_binary, load_dataset, load_mnist_idx,
                          parse_idx, synthetic_blobs, write_idx)
from trprune.errors import ValidationError

# two hand-made 3x4 images and their labels
IMAGES = np.array([[[0, 255, 1, 2], [3, 4, 5, 6], [7, 8, 9, 10]],
                   [[255, 254, 253, 252], [0, 0, 0, 0], [128, 64, 32, 16]]], dtype=np.uint8)
LABELS = np.array([7, 2], dtype=np.uint8)


def _mnist_dir(root, images=IMAGES, labels=LABELS, gz=False):
    suffix = ".gz" if gz else ""
    for stem in ("train", "t10k"):
        write_idx(os.path.join(root, f"{stem}-images-idx3-ubyte{suffix}"), images)
        write_idx(os.path.join(root, f"{stem}-labels-idx1-ubyte{suffix}"), labels)
    return str(root)


def test_idx_bytes_layout(tmp_path):
    p = str(tmp_path / "l")
    write_idx(p, LABELS)
    raw = open(p, "rb").read()
    assert raw == bytes([0, 0, 8, 1, 0, 0, 0, 2, 7, 2])


@pytest.mark.parametrize("gz", [False, True])
def test_mnist_fixture_exact_pixels(tmp_path, gz):
    ds = load_mnist_idx(_mnist_dir(tmp_path, gz=gz))
    assert ds.train_x.shape == (2, 1, 3, 4) and list(ds.train_y) == [7, 2]
    pixels = np.rint(ds.denormalize(ds.train_x) * 255.0)
    np.testing.assert_array_equal(pixels[:, 0], IMAGES)
    assert ds.mean == (0.1307,) and ds.std == (0.3081,)
    np.testing.assert_allclose(ds.train_x[0, 0, 0, 0], (0.0 - 0.1307) / 0.3081, rtol=1e-15)


def test_idx_truncated_names_offset(tmp_path):
    p = str(tmp_path / "x")
    write_idx(p, IMAGES)
    raw = open(p, "rb").read()
    with pytest.raises(ValidationError, match="offset 20"):
        parse_idx(raw[:20], data.IDX_IMAGES_MAGIC, p)
    with pytest.raises(ValidationError, match="offset 6"):
        parse_idx(raw[:6], data.IDX_IMAGES_MAGIC, p)
    with pytest.raises(ValidationError, match="magic"):
        parse_idx(raw, data.IDX_LABELS_MAGIC, p)
    with pytest.raises(ValidationError, match="trailing"):
        parse_idx(raw + b"\0", data.IDX_IMAGES_MAGIC, p)


def test_mnist_count_mismatch(tmp_path):
    _mnist_dir(tmp_path)
    write_idx(str(tmp_path / "train-labels-idx1-ubyte"), np.array([1, 2, 3], dtype=np.uint8))
    with pytest.raises(ValidationError, match="2 images but 3 labels"):
        load_mnist_idx(str(tmp_path))


def test_mnist_subset_and_pure(tmp_path):
    d = _mnist_dir(tmp_path)
    a, b = load_mnist_idx(d, n_train=1), load_mnist_idx(d, n_train=1)
    assert a.train_x.shape[0] == 1
    assert a.train_x.tobytes() == b.train_x.tobytes()
    assert load_dataset(d).name == "mnist"


# --- CIFAR-10 -------------------------------------------------------------

def _cifar_records(labels, seed=0):
    rng = np.random.default_rng(seed)
    pix = rng.integers(0, 256, size=(len(labels), 3, 32, 32), dtype=np.uint8)
    raw = b"".join(bytes([lab]) + p.tobytes() for lab, p in zip(labels, pix))
    return raw, pix


def test_cifar_fixture_roundtrip(tmp_path):
    raw, pix = _cifar_records([3, 0, 3, 9])
    (tmp_path / "data_batch_1.bin").write_bytes(raw)
    (tmp_path / "test_batch.bin").write_bytes(raw)
    ds = load_cifar10_binary(str(tmp_path))
    assert list(ds.train_y) == [3, 0, 3, 9] and ds.input_shape == (3, 32, 32)
    np.testing.assert_array_equal(np.rint(ds.denormalize(ds.train_x) * 255.0), pix)
    # channel planes: byte 1 is the first red pixel, byte 1025 the first green one
    assert raw[1] == pix[0, 0, 0, 0] and raw[1025] == pix[0, 1, 0, 0]


def test_cifar_subset_per_class(tmp_path):
    raw, _ = _cifar_records([3, 0, 3, 9, 3, 0])
    (tmp_path / "data_batch_1.bin").write_bytes(raw)
    (tmp_path / "test_batch.bin").write_bytes(raw)
    ds = load_cifar10_binary(str(tmp_path), n_train_per_class=1, n_test_per_class=2)
    assert list(ds.train_y) == [3, 0, 9]
    assert list(ds.test_y) == [3, 0, 3, 9, 0]


def test_cifar_malformed_length(tmp_path):
    raw, _ = _cifar_records([1])
    (tmp_path / "data_batch_1.bin").write_bytes(raw[:-1])
    (tmp_path / "test_batch.bin").write_bytes(raw)
    with pytest.raises(ValidationError, match=str(CIFAR_RECORD)):
        load_cifar10_binary(str(tmp_path))


# --- synthetic ------------------------------------------------------------

def test_synthetic_determinism():
    a, b, c = synthetic_blobs(3), synthetic_blobs(3), synthetic_blobs(4)
    assert a.train_x.tobytes() == b.train_x.tobytes() and a.test_y.tobytes() == b.test_y.tobytes()
    assert a.train_x.tobytes() != c.train_x.tobytes()


def test_synthetic_linear_probe():
    # least-squares one-vs-rest linear classifier as the probe
    ds = synthetic_blobs()
    x = np.hstack([ds.train_x.reshape(len(ds.train_y), -1), np.ones((len(ds.train_y), 1))])
    t = np.eye(ds.num_classes)[ds.train_y]
    coef = np.linalg.lstsq(x, t, rcond=None)[0]
    assert np.mean(np.argmax(x @ coef, axis=1) == ds.train_y) >= 0.99
    xt = np.hstack([ds.test_x.reshape(len(ds.test_y), -1), np.ones((len(ds.test_y), 1))])
    assert np.mean(np.argmax(xt @ coef, axis=1) == ds.test_y) >= 0.99


def test_normalization_roundtrip():
    rng = np.random.default_rng(0)
    ds = synthetic_blobs(1, channels=3)
    raw = rng.uniform(0, 1, size=(4, 3, 5, 5))
    again = ds.denormalize(data._normalize(raw, ds.mean, ds.std))
    assert np.abs(again - raw).max() <= 1e-12


def test_load_dataset_errors(tmp_path):
    with pytest.raises(ValidationError):
        load_dataset(str(tmp_path / "nope"))
    with pytest.raises(ValidationError):
        load_dataset(str(tmp_path))
    with pytest.raises(ValidationError):
        load_dataset("synthetic:x")
    assert load_dataset("synthetic:5").train_x.tobytes() == synthetic_blobs(5).train_x.tobytes()
