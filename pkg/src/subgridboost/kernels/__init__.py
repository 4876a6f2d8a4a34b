"""Hot numerical kernels with an import-time backend choice.

The compiled Cython extension is preferred when it was built; otherwise the
numpy implementations in ``_reference`` are used.  Set the environment
variable ``SUBGRIDBOOST_KERNELS`` to ``numpy`` or ``compiled`` to force a
backend (``compiled`` raises if the extension is missing).
"""

import os

import numpy as np

from . import _reference

_requested = os.environ.get("SUBGRIDBOOST_KERNELS", "auto").lower()
if _requested not in ("auto", "numpy", "compiled"):
    raise ValueError(f"SUBGRIDBOOST_KERNELS must be auto/numpy/compiled, got {_requested!r}")

_compiled = None
if _requested != "numpy":
    try:
        from . import _convkernels as _compiled
    except ImportError:
        if _requested == "compiled":
            raise

_active = _compiled if _compiled is not None else _reference

BACKEND = "compiled" if _active is _compiled and _compiled is not None else "numpy"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, w, b, stride=1, pad=0):
    """Cross-correlate NCHW ``x`` with filters ``w`` (OC,IC,KH,KW) plus bias."""
    return _active.conv2d_forward(_f64(x), _f64(w), _f64(b), stride, pad)


def conv2d_backward(x, w, gy, stride=1, pad=0):
    """Return (grad_x, grad_w, grad_b) for the forward pass above."""
    return _active.conv2d_backward(_f64(x), _f64(w), _f64(gy), stride, pad)


def maxpool2d_forward(x, window, stride):
    """Return (pooled, argmax) where argmax holds each window's flat index."""
    return _active.maxpool2d_forward(_f64(x), window, stride)


def maxpool2d_backward(gy, idx, in_shape, window, stride):
    """Scatter ``gy`` back to the input positions recorded in ``idx``."""
    return _active.maxpool2d_backward(
        _f64(gy), np.ascontiguousarray(idx, dtype=np.int64), tuple(in_shape), window, stride
    )


def backends():
    """Mapping of available backend name -> module (for benchmarks/tests)."""
    out = {"numpy": _reference}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
