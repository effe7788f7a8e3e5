"""Write a small real-MNIST IDX directory from the 5k sample bundled with mlxtend.

Use this when the full MNIST files cannot be downloaded. The 5,000 images
(500 per digit) are split per class into 400 train / 100 test, then put in a
fixed shuffled order.

    python tools/make_mnist_subset.py data/mnist-5k
"""
import argparse
import gzip
import io
import os

import numpy as np

from trprune.data import write_idx


def mlxtend_mnist():
    import mlxtend.data

    path = os.path.join(os.path.dirname(mlxtend.data.__file__), "data", "mnist_5k.csv.gz")
    with open(path, "rb") as f:
        raw = gzip.decompress(f.read())
    tab = np.loadtxt(io.BytesIO(raw), delimiter=",")
    return tab[:, :-1].astype(np.uint8).reshape(-1, 28, 28), tab[:, -1].astype(np.uint8)


def make_subset(out_dir, train_per_class=400, seed=0):
    x, y = mlxtend_mnist()
    tr, te = [], []
    for c in range(10):
        idx = np.flatnonzero(y == c)
        tr.extend(idx[:train_per_class])
        te.extend(idx[train_per_class:])
    rng = np.random.default_rng(seed)
    tr = np.asarray(tr)[rng.permutation(len(tr))]
    te = np.asarray(te)[rng.permutation(len(te))]
    os.makedirs(out_dir, exist_ok=True)
    write_idx(os.path.join(out_dir, "train-images-idx3-ubyte"), x[tr])
    write_idx(os.path.join(out_dir, "train-labels-idx1-ubyte"), y[tr])
    write_idx(os.path.join(out_dir, "t10k-images-idx3-ubyte"), x[te])
    write_idx(os.path.join(out_dir, "t10k-labels-idx1-ubyte"), y[te])
    return len(tr), len(te)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--train-per-class", type=int, default=400)
    args = ap.parse_args()
    n_tr, n_te = make_subset(args.out_dir, args.train_per_class)
    print(f"wrote {n_tr} train / {n_te} test images to {args.out_dir}")


if __name__ == "__main__":
    main()
