"""Hot inner loops, each in a numba flavour and a pure-NumPy flavour.

The public names at the bottom of the module dispatch on
:data:`trprune._accel.USE_NUMBA`. Both flavours are importable directly
(``*_loops`` / ``*_numpy``) so tests and benchmarks can compare them.

Layout conventions shared by the convolution helpers:

* activations are ``(batch, channels, height, width)``;
* ``cols`` produced by :func:`im2col` is ``(batch, out_h, out_w, c*kh*kw)``
  with the trailing axis ordered ``(ci, hi, wi)``, matching a filter bank
  reshaped to ``(n, c*kh*kw)``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# one-sided Jacobi orthogonalization
# --------------------------------------------------------------------------

@njit
def jacobi_rotate_loops(w, q, tol, max_sweeps):
    """Orthogonalize the rows of ``w`` in place by cyclic Jacobi rotations.

    ``q`` receives the same rotations. Returns ``(sweeps, max_off)`` where
    ``max_off`` is the largest relative inner product seen in the last
    sweep; convergence means a sweep applied no rotation.
    """
    p, n = w.shape
    pq = q.shape[1]
    sweeps = 0
    max_off = 0.0
    while sweeps < max_sweeps:
        sweeps += 1
        rotated = False
        max_off = 0.0
        for i in range(p - 1):
            for j in range(i + 1, p):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for k in range(n):
                    a = w[i, k]
                    b = w[j, k]
                    alpha += a * a
                    beta += b * b
                    gamma += a * b
                if alpha == 0.0 or beta == 0.0:
                    continue
                off = abs(gamma) / np.sqrt(alpha * beta)
                if off > max_off:
                    max_off = off
                if off <= tol:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for k in range(n):
                    a = w[i, k]
                    b = w[j, k]
                    w[i, k] = c * a - s * b
                    w[j, k] = s * a + c * b
                for k in range(pq):
                    a = q[i, k]
                    b = q[j, k]
                    q[i, k] = c * a - s * b
                    q[j, k] = s * a + c * b
        if not rotated:
            return sweeps, max_off
    return sweeps + 1, max_off


def jacobi_rotate_numpy(w, q, tol, max_sweeps):
    p = w.shape[0]
    sweeps = 0
    max_off = 0.0
    while sweeps < max_sweeps:
        sweeps += 1
        rotated = False
        max_off = 0.0
        for i in range(p - 1):
            wi = w[i]
            for j in range(i + 1, p):
                wj = w[j]
                alpha = float(wi @ wi)
                beta = float(wj @ wj)
                gamma = float(wi @ wj)
                if alpha == 0.0 or beta == 0.0:
                    continue
                off = abs(gamma) / np.sqrt(alpha * beta)
                max_off = max(max_off, off)
                if off <= tol:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                w[i], w[j] = c * wi - s * wj, s * wi + c * wj
                q[i], q[j] = c * q[i] - s * q[j], s * q[i] + c * q[j]
        if not rotated:
            return sweeps, max_off
    # one past the cap signals non-convergence, same as the loop version
    return sweeps + 1, max_off


# --------------------------------------------------------------------------
# im2col / col2im
# --------------------------------------------------------------------------

def _pad(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


@njit
def _im2col_padded_loops(xp, kh, kw, sh, sw, out_h, out_w):
    b, c = xp.shape[0], xp.shape[1]
    cols = np.empty((b, out_h, out_w, c * kh * kw))
    for bi in range(b):
        for oy in range(out_h):
            y0 = oy * sh
            for ox in range(out_w):
                x0 = ox * sw
                col = 0
                for ci in range(c):
                    for hi in range(kh):
                        for wi in range(kw):
                            cols[bi, oy, ox, col] = xp[bi, ci, y0 + hi, x0 + wi]
                            col += 1
    return cols


def im2col_loops(x, kh, kw, stride, padding):
    (sh, sw), (ph, pw) = stride, padding
    xp = np.ascontiguousarray(_pad(x, ph, pw))
    out_h = (xp.shape[2] - kh) // sh + 1
    out_w = (xp.shape[3] - kw) // sw + 1
    return _im2col_padded_loops(xp, kh, kw, sh, sw, out_h, out_w)


def im2col_numpy(x, kh, kw, stride, padding):
    (sh, sw), (ph, pw) = stride, padding
    xp = _pad(x, ph, pw)
    # (b, c, H', W', kh, kw) -> (b, H', W', c, kh, kw)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    b, c, out_h, out_w = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        b, out_h, out_w, c * kh * kw)


@njit
def _col2im_padded_loops(gcols, c, hp, wp, kh, kw, sh, sw):
    b, out_h, out_w = gcols.shape[0], gcols.shape[1], gcols.shape[2]
    gx = np.zeros((b, c, hp, wp))
    for bi in range(b):
        for oy in range(out_h):
            y0 = oy * sh
            for ox in range(out_w):
                x0 = ox * sw
                col = 0
                for ci in range(c):
                    for hi in range(kh):
                        for wi in range(kw):
                            gx[bi, ci, y0 + hi, x0 + wi] += gcols[bi, oy, ox, col]
                            col += 1
    return gx


def _crop(gx, ph, pw):
    h, w = gx.shape[2], gx.shape[3]
    return gx[:, :, ph:h - ph, pw:w - pw]


def col2im_loops(gcols, x_shape, kh, kw, stride, padding):
    (sh, sw), (ph, pw) = stride, padding
    b, c, h, w = x_shape
    gx = _col2im_padded_loops(np.ascontiguousarray(gcols), c, h + 2 * ph,
                              w + 2 * pw, kh, kw, sh, sw)
    return np.ascontiguousarray(_crop(gx, ph, pw))


def col2im_numpy(gcols, x_shape, kh, kw, stride, padding):
    (sh, sw), (ph, pw) = stride, padding
    b, c, h, w = x_shape
    out_h, out_w = gcols.shape[1], gcols.shape[2]
    g = gcols.reshape(b, out_h, out_w, c, kh, kw)
    gx = np.zeros((b, c, h + 2 * ph, w + 2 * pw))
    for hi in range(kh):
        for wi in range(kw):
            # (b, oh, ow, c) -> (b, c, oh, ow)
            gx[:, :, hi:hi + sh * out_h:sh, wi:wi + sw * out_w:sw] += \
                g[:, :, :, :, hi, wi].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(_crop(gx, ph, pw))


# --------------------------------------------------------------------------
# 2x2 max pooling, stride 2; odd trailing rows/cols are dropped
# --------------------------------------------------------------------------

@njit
def maxpool2x2_forward_loops(x):
    b, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    out = np.empty((b, c, oh, ow))
    arg = np.empty((b, c, oh, ow), dtype=np.int8)
    for bi in range(b):
        for ci in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    best = x[bi, ci, 2 * oy, 2 * ox]
                    idx = 0
                    for k in range(1, 4):
                        v = x[bi, ci, 2 * oy + k // 2, 2 * ox + k % 2]
                        # strict '>' keeps the first occurrence on ties
                        if v > best:
                            best = v
                            idx = k
                    out[bi, ci, oy, ox] = best
                    arg[bi, ci, oy, ox] = idx
    return out, arg


@njit
def maxpool2x2_backward_loops(grad_out, arg, x_shape):
    b, c, h, w = x_shape
    oh, ow = grad_out.shape[2], grad_out.shape[3]
    gx = np.zeros((b, c, h, w))
    for bi in range(b):
        for ci in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    k = arg[bi, ci, oy, ox]
                    gx[bi, ci, 2 * oy + k // 2, 2 * ox + k % 2] = grad_out[bi, ci, oy, ox]
    return gx


def _blocks(x):
    b, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    v = x[:, :, :2 * oh, :2 * ow].reshape(b, c, oh, 2, ow, 2)
    return v.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow, 4)


def maxpool2x2_forward_numpy(x):
    blk = _blocks(x)
    arg = blk.argmax(axis=-1).astype(np.int8)  # argmax returns first maximum
    out = np.take_along_axis(blk, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, arg


def maxpool2x2_backward_numpy(grad_out, arg, x_shape):
    b, c, h, w = x_shape
    oh, ow = grad_out.shape[2], grad_out.shape[3]
    blk = np.zeros((b, c, oh, ow, 4))
    np.put_along_axis(blk, arg[..., None].astype(np.intp), grad_out[..., None], axis=-1)
    gx = np.zeros((b, c, h, w))
    gx[:, :, :2 * oh, :2 * ow] = blk.reshape(b, c, oh, ow, 2, 2).transpose(
        0, 1, 2, 4, 3, 5).reshape(b, c, 2 * oh, 2 * ow)
    return gx


# the strided-view im2col already beats the compiled loop (benchmarks/),
# so it is used on both paths
im2col = im2col_numpy

if USE_NUMBA:
    jacobi_rotate = jacobi_rotate_loops
    col2im = col2im_loops
    maxpool2x2_forward = maxpool2x2_forward_loops
    maxpool2x2_backward = maxpool2x2_backward_loops
else:
    jacobi_rotate = jacobi_rotate_numpy
    col2im = col2im_numpy
    maxpool2x2_forward = maxpool2x2_forward_numpy
    maxpool2x2_backward = maxpool2x2_backward_numpy
