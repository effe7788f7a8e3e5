"""Dataset loaders: MNIST IDX, CIFAR-10 binary, and seeded synthetic blobs.

Directory layouts
-----------------
MNIST: ``train-images-idx3-ubyte``, ``train-labels-idx1-ubyte``,
``t10k-images-idx3-ubyte``, ``t10k-labels-idx1-ubyte`` (each optionally
``.gz``; ``.idx3-ubyte`` spellings are accepted too).

CIFAR-10: ``data_batch_1.bin`` ... ``data_batch_5.bin`` (whichever exist)
and ``test_batch.bin``.
"""
import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MNIST_MEAN = (0.1307,)
MNIST_STD = (0.3081,)
CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2470, 0.2435, 0.2616)
CIFAR_RECORD = 1 + 3 * 32 * 32


@dataclass
class Dataset:
    name: str
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int
    mean: tuple
    std: tuple

    @property
    def input_shape(self):
        return tuple(self.train_x.shape[1:])

    def denormalize(self, x):
        mean = np.asarray(self.mean)[None, :, None, None]
        std = np.asarray(self.std)[None, :, None, None]
        return x * std + mean


def _normalize(x, mean, std):
    return (x - np.asarray(mean)[None, :, None, None]) / np.asarray(std)[None, :, None, None]


# --------------------------------------------------------------------------
# IDX
# --------------------------------------------------------------------------

def _read_bytes(path):
    with open(path, "rb") as f:
        raw = f.read()
    if path.endswith(".gz"):
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw, expected_magic, path="<bytes>"):
    """Decode an unsigned-byte IDX blob into an ``uint8`` array."""
    if len(raw) < 4:
        raise ValidationError(f"{path}: truncated IDX header at offset {len(raw)} (need 4 bytes)")
    magic, = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise ValidationError(
            f"{path}: bad IDX magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    end = 4 + 4 * ndim
    if len(raw) < end:
        raise ValidationError(f"{path}: truncated IDX dimension header at offset {len(raw)} (need {end} bytes)")
    dims = struct.unpack(f">{ndim}I", raw[4:end])
    count = int(np.prod(dims)) if dims else 0
    if len(raw) < end + count:
        raise ValidationError(
            f"{path}: truncated IDX payload at offset {len(raw)} (need {end + count} bytes)")
    if len(raw) > end + count:
        raise ValidationError(
            f"{path}: {len(raw) - end - count} trailing bytes after offset {end + count}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=end).reshape(dims)


def write_idx(path, array):
    """Write a ``uint8`` array of rank 1 or 3 as IDX (gzip when ``path`` ends in .gz)."""
    a = np.asarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}.get(a.ndim)
    if magic is None:
        raise ValidationError("write_idx supports label vectors and image stacks only")
    raw = struct.pack(">I", magic) + struct.pack(f">{a.ndim}I", *a.shape) + a.tobytes()
    if path.endswith(".gz"):
        raw = gzip.compress(raw, mtime=0)
    with open(path, "wb") as f:
        f.write(raw)


def _find(directory, stem, kind):
    for name in (f"{stem}-{kind}", f"{stem}.{kind}"):
        for suffix in ("", ".gz"):
            p = os.path.join(directory, name + suffix)
            if os.path.exists(p):
                return p
    return None


def _mnist_split(directory, stem):
    ip = _find(directory, f"{stem}-images", "idx3-ubyte")
    lp = _find(directory, f"{stem}-labels", "idx1-ubyte")
    if ip is None or lp is None:
        raise ValidationError(f"{directory}: missing MNIST {stem} image/label files")
    images = parse_idx(_read_bytes(ip), IDX_IMAGES_MAGIC, ip)
    labels = parse_idx(_read_bytes(lp), IDX_LABELS_MAGIC, lp)
    if images.shape[0] != labels.shape[0]:
        raise ValidationError(
            f"{directory}: {stem} has {images.shape[0]} images but {labels.shape[0]} labels")
    return images, labels


def load_mnist_idx(directory, n_train=None, n_test=None):
    """Load MNIST, keep the first ``n_train``/``n_test`` samples, standardize."""
    tr_x, tr_y = _mnist_split(directory, "train")
    te_x, te_y = _mnist_split(directory, "t10k")
    tr_x, tr_y = tr_x[:n_train], tr_y[:n_train]
    te_x, te_y = te_x[:n_test], te_y[:n_test]
    if len(tr_y) == 0 or len(te_y) == 0:
        raise ValidationError(f"{directory}: empty MNIST split")
    if max(tr_y.max(), te_y.max()) > 9:
        raise ValidationError(f"{directory}: MNIST labels must be 0..9")

    def prep(x):
        return _normalize(x[:, None].astype(np.float64) / 255.0, MNIST_MEAN, MNIST_STD)

    return Dataset("mnist", prep(tr_x), tr_y.astype(np.int64), prep(te_x),
                   te_y.astype(np.int64), 10, MNIST_MEAN, MNIST_STD)


# --------------------------------------------------------------------------
# CIFAR-10
# --------------------------------------------------------------------------

def parse_cifar_records(raw, path="<bytes>"):
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise ValidationError(
            f"{path}: malformed CIFAR-10 file, {len(raw)} bytes is not a multiple of "
            f"the {CIFAR_RECORD}-byte record length")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise ValidationError(f"{path}: CIFAR-10 label out of range")
    return rec[:, 1:].reshape(-1, 3, 32, 32), labels


def _first_per_class(x, y, n):
    if n is None:
        return x, y
    keep = np.zeros(len(y), dtype=bool)
    for c in np.unique(y):
        keep[np.flatnonzero(y == c)[:n]] = True
    return x[keep], y[keep]


def load_cifar10_binary(directory, n_train_per_class=None, n_test_per_class=None):
    """Load CIFAR-10 ``.bin`` batches; optionally keep the first N per class."""
    train = [os.path.join(directory, f"data_batch_{i}.bin") for i in range(1, 6)]
    train = [p for p in train if os.path.exists(p)]
    test = os.path.join(directory, "test_batch.bin")
    if not train or not os.path.exists(test):
        raise ValidationError(f"{directory}: missing CIFAR-10 batch files")
    parts = [parse_cifar_records(_read_bytes(p), p) for p in train]
    tr_x = np.concatenate([p[0] for p in parts])
    tr_y = np.concatenate([p[1] for p in parts])
    te_x, te_y = parse_cifar_records(_read_bytes(test), test)
    tr_x, tr_y = _first_per_class(tr_x, tr_y, n_train_per_class)
    te_x, te_y = _first_per_class(te_x, te_y, n_test_per_class)

    def prep(x):
        return _normalize(x.astype(np.float64) / 255.0, CIFAR10_MEAN, CIFAR10_STD)

    return Dataset("cifar10", prep(tr_x), tr_y, prep(te_x), te_y, 10, CIFAR10_MEAN, CIFAR10_STD)


# --------------------------------------------------------------------------
# synthetic
# --------------------------------------------------------------------------

def synthetic_blobs(seed=0, n_per_class=100, classes=2, image_size=16, channels=1,
                    noise=1.0, n_test_per_class=None):
    """Gaussian clusters around random per-class prototype images.

    At the defaults the class means sit ~22 noise standard deviations apart,
    so the classes are linearly separable with overwhelming probability.
    """
    if n_per_class < 1 or classes < 2 or image_size < 1:
        raise ValidationError("synthetic_blobs needs n_per_class >= 1, classes >= 2, image_size >= 1")
    if n_test_per_class is None:
        n_test_per_class = max(1, n_per_class // 2)
    rng = np.random.default_rng(seed)
    shape = (channels, image_size, image_size)
    protos = rng.standard_normal((classes,) + shape)

    def draw(n):
        y = np.arange(n * classes) % classes
        return protos[y] + noise * rng.standard_normal((len(y),) + shape), y.astype(np.int64)

    tr_x, tr_y = draw(n_per_class)
    te_x, te_y = draw(n_test_per_class)
    mean = tuple(float(v) for v in tr_x.mean(axis=(0, 2, 3)))
    std = tuple(float(v) for v in tr_x.std(axis=(0, 2, 3)))
    return Dataset("synthetic", _normalize(tr_x, mean, std), tr_y,
                   _normalize(te_x, mean, std), te_y, classes, mean, std)


def load_dataset(source, n_train=None, n_test=None):
    """Resolve a ``--data`` argument: ``synthetic[:seed]`` or a dataset directory."""
    source = str(source)
    if source == "synthetic" or source.startswith("synthetic:"):
        seed = 0
        if ":" in source:
            try:
                seed = int(source.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad synthetic seed in {source!r}") from None
        return synthetic_blobs(seed=seed)
    if not os.path.isdir(source):
        raise ValidationError(f"data directory {source!r} does not exist")
    if _find(source, "train-images", "idx3-ubyte"):
        return load_mnist_idx(source, n_train, n_test)
    if os.path.exists(os.path.join(source, "test_batch.bin")):
        per_train = None if n_train is None else max(1, n_train // 10)
        per_test = None if n_test is None else max(1, n_test // 10)
        return load_cifar10_binary(source, per_train, per_test)
    raise ValidationError(f"{source!r} holds neither MNIST IDX nor CIFAR-10 binary files")
