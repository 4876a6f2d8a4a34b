"""Numpy fallback implementations of the hot convolution/pooling kernels.

Forward convolution builds strided im2col views and reduces them with
tensordot (BLAS); backward scatters through per-offset slices so no
scatter-add over individual pixels is needed for the conv path.  All
arrays are float64, NCHW, C-contiguous.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    cols = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # cols: (n, c, oh, ow, kh, kw) contracted with w over (c, kh, kw)
    y = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))
    y = np.ascontiguousarray(np.moveaxis(y, 3, 1))
    y += b[None, :, None, None]
    return y


def conv2d_backward(x, w, gy, stride, pad):
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    _, _, oh, ow = gy.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x

    gb = gy.sum(axis=(0, 2, 3))

    cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    gw = np.tensordot(gy, cols, axes=([0, 2, 3], [0, 2, 3]))

    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            # (n, oh, ow, ic) contribution of kernel offset (i, j)
            contrib = np.tensordot(gy, w[:, :, i, j], axes=([1], [0]))
            gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += (
                np.moveaxis(contrib, 3, 1)
            )
    gx = gxp[:, :, pad : pad + h, pad : pad + wd] if pad else gxp
    return np.ascontiguousarray(gx), np.ascontiguousarray(gw), gb


def maxpool2d_forward(x, window, stride):
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    views = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = views.reshape(n, c, oh, ow, window * window)
    # argmax returns the first maximum, i.e. the lowest flat index in the window
    idx = flat.argmax(axis=4)
    y = np.take_along_axis(flat, idx[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(y), np.ascontiguousarray(idx)


def maxpool2d_backward(gy, idx, in_shape, window, stride):
    n, c, h, w = in_shape
    _, _, oh, ow = gy.shape
    gx = np.zeros(in_shape, dtype=np.float64)
    rows = (np.arange(oh) * stride)[None, None, :, None] + idx // window
    cols = (np.arange(ow) * stride)[None, None, None, :] + idx % window
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    # windows may overlap when stride < window, so accumulate
    np.add.at(gx, (ni, ci, rows, cols), gy)
    return gx
