"""Time the numba kernels against their NumPy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Both flavours are called directly, so the TRP_DISABLE_NUMBA flag does not
matter here. The first numba call (compilation) is excluded.
"""
import argparse
import timeit

import numpy as np

from trprune import _accel, kernels


def _cases(rng):
    x = rng.standard_normal((64, 16, 12, 12))
    cols = kernels.im2col_numpy(x, 5, 5, (1, 1), (0, 0))
    g = rng.standard_normal(cols.shape)
    pool_in = rng.standard_normal((64, 16, 24, 24))
    out, arg = kernels.maxpool2x2_forward_numpy(pool_in)
    gout = rng.standard_normal(out.shape)
    a = rng.standard_normal((32, 400))

    def jacobi(fn):
        def run():
            w, q = a.copy(), np.eye(a.shape[0])
            fn(w, q, 1e-14, 60)
        return run

    return {
        "jacobi 32x400": (jacobi(kernels.jacobi_rotate_loops), jacobi(kernels.jacobi_rotate_numpy)),
        "im2col 64x16x12x12 k5": (lambda: kernels.im2col_loops(x, 5, 5, (1, 1), (0, 0)),
                                  lambda: kernels.im2col_numpy(x, 5, 5, (1, 1), (0, 0))),
        "col2im 64x16x12x12 k5": (lambda: kernels.col2im_loops(g, x.shape, 5, 5, (1, 1), (0, 0)),
                                  lambda: kernels.col2im_numpy(g, x.shape, 5, 5, (1, 1), (0, 0))),
        "maxpool fwd 64x16x24x24": (lambda: kernels.maxpool2x2_forward_loops(pool_in),
                                    lambda: kernels.maxpool2x2_forward_numpy(pool_in)),
        "maxpool bwd 64x16x24x24": (
            lambda: kernels.maxpool2x2_backward_loops(gout, arg, pool_in.shape),
            lambda: kernels.maxpool2x2_backward_numpy(gout, arg, pool_in.shape)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numba ms':>10s} {'numpy ms':>10s} {'ratio':>8s}")
    for name, (fast, slow) in _cases(rng).items():
        fast()  # compile
        tf = min(timeit.repeat(fast, number=1, repeat=args.repeat)) * 1e3
        ts = min(timeit.repeat(slow, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:28s} {tf:10.2f} {ts:10.2f} {ts / tf:8.1f}x")


if __name__ == "__main__":
    main()
