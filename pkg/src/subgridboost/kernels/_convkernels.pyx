# Compiled convolution/pooling kernels.  Direct (no im2col) convolution
# with the kernel-offset loops hoisted outside the spatial loops: the inner
# loop runs contiguously over output columns, and the padding bounds are
# resolved per offset instead of per pixel.  Same contracts as
# kernels._reference; arrays must be float64 C-contiguous NCHW.

import numpy as np


cdef inline Py_ssize_t _row_min(Py_ssize_t off, Py_ssize_t stride):
    # smallest r with r * stride + off >= 0
    if off >= 0:
        return 0
    return (-off + stride - 1) // stride


cdef inline Py_ssize_t _row_end(Py_ssize_t off, Py_ssize_t stride,
                                Py_ssize_t extent, Py_ssize_t limit):
    # one past the largest r < limit with r * stride + off <= extent - 1
    cdef Py_ssize_t top = extent - 1 - off
    if top < 0:
        return 0
    cdef Py_ssize_t end = top // stride + 1
    return end if end < limit else limit


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                   double[::1] b, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t oc = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (wd + 2 * pad - kw) // stride + 1
    out = np.empty((n, oc, oh, ow), dtype=np.float64)
    cdef double[:, :, :, ::1] y = out
    cdef Py_ssize_t i, o, r, s, ic, p, q
    cdef Py_ssize_t roff, coff, r0, r1, s0, s1, ih
    cdef double wv, bias
    for i in range(n):
        for o in range(oc):
            bias = b[o]
            for r in range(oh):
                for s in range(ow):
                    y[i, o, r, s] = bias
            for ic in range(c):
                for p in range(kh):
                    roff = p - pad
                    r0 = _row_min(roff, stride)
                    r1 = _row_end(roff, stride, h, oh)
                    for q in range(kw):
                        coff = q - pad
                        s0 = _row_min(coff, stride)
                        s1 = _row_end(coff, stride, wd, ow)
                        wv = w[o, ic, p, q]
                        for r in range(r0, r1):
                            ih = r * stride + roff
                            for s in range(s0, s1):
                                y[i, o, r, s] += x[i, ic, ih, s * stride + coff] * wv
    return out


def conv2d_backward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                    double[:, :, :, ::1] gy, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t oc = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]
    gx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    gw_arr = np.zeros((oc, c, kh, kw), dtype=np.float64)
    gb_arr = np.zeros(oc, dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, o, r, s, ic, p, q
    cdef Py_ssize_t roff, coff, r0, r1, s0, s1, ih
    cdef double wv, acc, g
    for i in range(n):
        for o in range(oc):
            acc = 0.0
            for r in range(oh):
                for s in range(ow):
                    acc += gy[i, o, r, s]
            gb[o] += acc
            for ic in range(c):
                for p in range(kh):
                    roff = p - pad
                    r0 = _row_min(roff, stride)
                    r1 = _row_end(roff, stride, h, oh)
                    for q in range(kw):
                        coff = q - pad
                        s0 = _row_min(coff, stride)
                        s1 = _row_end(coff, stride, wd, ow)
                        wv = w[o, ic, p, q]
                        acc = 0.0
                        for r in range(r0, r1):
                            ih = r * stride + roff
                            for s in range(s0, s1):
                                g = gy[i, o, r, s]
                                acc += x[i, ic, ih, s * stride + coff] * g
                                gx[i, ic, ih, s * stride + coff] += wv * g
                        gw[o, ic, p, q] += acc
    return gx_arr, gw_arr, gb_arr


def maxpool2d_forward(double[:, :, :, ::1] x, int window, int stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - window) // stride + 1
    cdef Py_ssize_t ow = (w - window) // stride + 1
    out = np.empty((n, c, oh, ow), dtype=np.float64)
    idx_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef double[:, :, :, ::1] y = out
    cdef long long[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t i, ic, r, s, p, q, best
    cdef double v, cur
    for i in range(n):
        for ic in range(c):
            for r in range(oh):
                for s in range(ow):
                    best = 0
                    v = x[i, ic, r * stride, s * stride]
                    for p in range(window):
                        for q in range(window):
                            cur = x[i, ic, r * stride + p, s * stride + q]
                            # strict > keeps the lowest flat index on ties
                            if cur > v:
                                v = cur
                                best = p * window + q
                    y[i, ic, r, s] = v
                    idx[i, ic, r, s] = best
    return out, idx_arr


def maxpool2d_backward(double[:, :, :, ::1] gy, long long[:, :, :, ::1] idx,
                       in_shape, int window, int stride):
    cdef Py_ssize_t n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]
    gx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t i, ic, r, s
    cdef long long k
    for i in range(n):
        for ic in range(c):
            for r in range(oh):
                for s in range(ow):
                    k = idx[i, ic, r, s]
                    gx[i, ic, r * stride + k // window, s * stride + k % window] += gy[i, ic, r, s]
    return gx_arr
