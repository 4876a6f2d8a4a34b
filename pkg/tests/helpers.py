"""Shared test oracles: naive layer implementations and finite differences.

Everything here is deliberately independent of the package's kernel and
backward-pass code paths (plain loops / direct arithmetic) so the tests
remain two-sided checks.
"""

import numpy as np


def naive_conv2d(x, w, b, stride=1, pad=0):
    """Direct-definition convolution oracle (slow loops)."""
    n, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    y = np.zeros((n, oc, oh, ow))
    for i in range(n):
        for o in range(oc):
            for r in range(oh):
                for s in range(ow):
                    acc = b[o]
                    for ic in range(c):
                        for p in range(kh):
                            for q in range(kw):
                                acc += xp[i, ic, r * stride + p, s * stride + q] * w[o, ic, p, q]
                    y[i, o, r, s] = acc
    return y


def naive_dense(x, w, b):
    n, fi = x.shape
    fo = w.shape[1]
    y = np.zeros((n, fo))
    for i in range(n):
        for j in range(fo):
            acc = b[j]
            for k in range(fi):
                acc += x[i, k] * w[k, j]
            y[i, j] = acc
    return y


def naive_maxpool2d(x, window, stride):
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    y = np.zeros((n, c, oh, ow))
    for i in range(n):
        for ic in range(c):
            for r in range(oh):
                for s in range(ow):
                    y[i, ic, r, s] = x[
                        i, ic, r * stride : r * stride + window, s * stride : s * stride + window
                    ].max()
    return y


def fd_grad(f, arr, h=1e-5):
    """Central-difference gradient of scalar ``f()`` w.r.t. ``arr`` in place."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(analytic, numeric):
    """Max elementwise |a - n| / max(|n|, 1)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1.0)))


def margin_safe_input(net, rng, shape, margin=3e-4, tries=200):
    """Seeded input whose relu/maxpool decisions sit away from kinks.

    Central differences are only valid where the piecewise-linear layers do
    not switch branch inside the probe interval; a margin of 3e-4 is a 10x
    guard over the worst-case h=1e-5 perturbation reach.  Resampling is
    deterministic for a given rng state.
    """
    from subgridboost.nn import MaxPool2d, ReLU

    for _ in range(tries):
        x = rng.normal(size=shape)
        ok = True
        cur = x
        for layer in net.layers:
            nxt = layer.forward(cur)
            if isinstance(layer, ReLU) and np.abs(cur).min() < margin:
                ok = False
                break
            if isinstance(layer, MaxPool2d):
                n, c, oh, ow = nxt.shape
                win, st = layer.window, layer.stride
                for r in range(oh):
                    for s in range(ow):
                        block = cur[:, :, r * st : r * st + win, s * st : s * st + win]
                        flat = np.sort(block.reshape(n, c, -1), axis=2)
                        gap = flat[:, :, -1] - flat[:, :, -2]
                        # all-clipped windows tie at exactly 0; relu keeps them there
                        unstable = (gap < margin) & (flat[:, :, -1] != 0.0)
                        if np.any(unstable):
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
            cur = nxt
        if ok:
            return x
    raise AssertionError("could not find a margin-safe input")
