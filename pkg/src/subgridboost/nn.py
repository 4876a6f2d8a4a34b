"""Minimal dense-tensor network engine with reverse-mode differentiation.

Everything is float64.  Activations flow through layers as plain numpy
arrays (batch-first: NCHW for spatial data, (N, F) after flattening);
parameters live in :class:`Tensor` objects carrying an optional ``grad``
slot that backward passes accumulate into.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GeometryError, StateError


class Tensor:
    """A float64 array with an optional gradient of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def add_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description; ``build`` instantiates the live layer."""

    kind: str  # conv2d | maxpool2d | relu | flatten | dense
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    window: int = 0
    width: int = 0  # dense output width

    def build(self, in_geometry, rng):
        if self.kind == "conv2d":
            c = in_geometry[0]
            layer = Conv2d(c, self.out_channels, self.kernel, self.stride, self.pad, rng)
        elif self.kind == "maxpool2d":
            layer = MaxPool2d(self.window, self.stride)
        elif self.kind == "relu":
            layer = ReLU()
        elif self.kind == "flatten":
            layer = Flatten()
        elif self.kind == "dense":
            if len(in_geometry) != 1:
                raise GeometryError(
                    f"dense layer needs flat input, got geometry {in_geometry}"
                )
            layer = Dense(in_geometry[0], self.width, rng)
        else:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        return layer


def conv_spec(out_channels, kernel, stride=1, pad=0):
    return LayerSpec("conv2d", out_channels=out_channels, kernel=kernel, stride=stride, pad=pad)


def pool_spec(window, stride=None):
    return LayerSpec("maxpool2d", window=window, stride=window if stride is None else stride)


def relu_spec():
    return LayerSpec("relu")


def flatten_spec():
    return LayerSpec("flatten")


def dense_spec(width):
    return LayerSpec("dense", width=width)


def _init_uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d:
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel, stride, pad, rng):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        fan_in = in_channels * kernel * kernel
        self.w = Tensor(_init_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in))
        self.b = Tensor(_init_uniform(rng, (out_channels,), fan_in))
        self._x = None

    def params(self):
        return [self.w, self.b]

    def out_geometry(self, geom):
        c, h, w = geom
        if c != self.in_channels:
            raise GeometryError(f"conv2d expects {self.in_channels} channels, got {c}")
        oh = (h + 2 * self.pad - self.kernel) // self.stride + 1
        ow = (w + 2 * self.pad - self.kernel) // self.stride + 1
        if oh <= 0 or ow <= 0:
            raise GeometryError(f"conv2d output collapses on {h}x{w} input")
        return (self.out_channels, oh, ow)

    def forward(self, x):
        if x.ndim != 4:
            raise GeometryError(f"conv2d expects NCHW input, got shape {x.shape}")
        self.out_geometry(x.shape[1:])
        self._x = x
        return kernels.conv2d_forward(x, self.w.data, self.b.data, self.stride, self.pad)

    def backward(self, gy):
        if self._x is None:
            raise StateError("conv2d backward before forward")
        gx, gw, gb = kernels.conv2d_backward(self._x, self.w.data, gy, self.stride, self.pad)
        self.w.add_grad(gw)
        self.b.add_grad(gb)
        return gx


class MaxPool2d:
    kind = "maxpool2d"

    def __init__(self, window, stride):
        self.window = window
        self.stride = stride
        self._idx = None
        self._in_shape = None

    def params(self):
        return []

    def out_geometry(self, geom):
        c, h, w = geom
        oh = (h - self.window) // self.stride + 1
        ow = (w - self.window) // self.stride + 1
        if oh <= 0 or ow <= 0:
            raise GeometryError(f"maxpool2d window {self.window} exceeds {h}x{w} input")
        return (c, oh, ow)

    def forward(self, x):
        if x.ndim != 4:
            raise GeometryError(f"maxpool2d expects NCHW input, got shape {x.shape}")
        self.out_geometry(x.shape[1:])
        y, idx = kernels.maxpool2d_forward(x, self.window, self.stride)
        self._idx = idx
        self._in_shape = x.shape
        return y

    def backward(self, gy):
        if self._idx is None:
            raise StateError("maxpool2d backward before forward")
        return kernels.maxpool2d_backward(gy, self._idx, self._in_shape, self.window, self.stride)


class ReLU:
    kind = "relu"

    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def out_geometry(self, geom):
        return geom

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, gy):
        if self._mask is None:
            raise StateError("relu backward before forward")
        return np.where(self._mask, gy, 0.0)


class Flatten:
    kind = "flatten"

    def __init__(self):
        self._in_shape = None

    def params(self):
        return []

    def out_geometry(self, geom):
        return (int(np.prod(geom)),)

    def forward(self, x):
        self._in_shape = x.shape
        return np.ascontiguousarray(x.reshape(x.shape[0], -1))

    def backward(self, gy):
        if self._in_shape is None:
            raise StateError("flatten backward before forward")
        return gy.reshape(self._in_shape)


class Dense:
    kind = "dense"

    def __init__(self, in_width, out_width, rng):
        self.in_width = in_width
        self.out_width = out_width
        self.w = Tensor(_init_uniform(rng, (in_width, out_width), in_width))
        self.b = Tensor(_init_uniform(rng, (out_width,), in_width))
        self._x = None

    def params(self):
        return [self.w, self.b]

    def out_geometry(self, geom):
        if len(geom) != 1 or geom[0] != self.in_width:
            raise GeometryError(f"dense expects width {self.in_width}, got geometry {geom}")
        return (self.out_width,)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise GeometryError(f"dense expects (N, {self.in_width}) input, got shape {x.shape}")
        self._x = x
        return x @ self.w.data + self.b.data

    def backward(self, gy):
        if self._x is None:
            raise StateError("dense backward before forward")
        self.w.add_grad(self._x.T @ gy)
        self.b.add_grad(gy.sum(axis=0))
        return gy @ self.w.data.T


@dataclass
class Network:
    """Ordered layer stack split into a feature extractor and a classifier.

    ``layers[:split_index]`` is the feature extractor (convolutional prefix,
    size-agnostic, never contains a dense layer); the classifier starts at
    the first dense layer.
    """

    layers: list = field(default_factory=list)
    split_index: int = 0

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if layer.kind == "dense" and i < self.split_index:
                raise GeometryError(f"dense layer {i} inside the feature extractor")
        if self.split_index < len(self.layers):
            first = self.layers[self.split_index]
            if first.kind != "dense":
                raise GeometryError(
                    f"classifier must begin at a dense layer, got {first.kind!r}"
                )
        self._ran_forward = False

    @property
    def feature_extractor(self):
        return self.layers[: self.split_index]

    @property
    def classifier(self):
        return self.layers[self.split_index :]

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def out_geometry(self, in_geometry):
        geom = tuple(in_geometry)
        for i, layer in enumerate(self.layers):
            try:
                geom = layer.out_geometry(geom)
            except GeometryError as e:
                raise GeometryError(f"layer {i} ({layer.kind}): {e}") from None
        return geom

    def feature_width(self, in_geometry):
        """Flattened feature-extractor output width for a (C, H, W) input."""
        geom = tuple(in_geometry)
        for i, layer in enumerate(self.feature_extractor):
            try:
                geom = layer.out_geometry(geom)
            except GeometryError as e:
                raise GeometryError(f"layer {i} ({layer.kind}): {e}") from None
        return int(np.prod(geom))

    def forward(self, x, features_only=False):
        x = np.ascontiguousarray(x, dtype=np.float64)
        stack = self.feature_extractor if features_only else self.layers
        for i, layer in enumerate(stack):
            try:
                x = layer.forward(x)
            except GeometryError as e:
                raise GeometryError(f"layer {i} ({layer.kind}): {e}") from None
        self._ran_forward = not features_only
        return x

    def backward(self, upstream, wrt_input=False):
        """Propagate ``upstream`` (d loss / d output) back through the stack.

        Parameter gradients accumulate into each Tensor's ``grad``; the
        gradient w.r.t. the network input is returned when ``wrt_input``.
        """
        if not self._ran_forward:
            raise StateError("backward before forward")
        g = np.ascontiguousarray(upstream, dtype=np.float64)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g if wrt_input else None


def mse_loss(pred, target):
    """Batch-summed squared error and its gradient: (sum||p-t||^2, 2(p-t))."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise GeometryError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.sum(diff * diff)), 2.0 * diff


def softmax_cross_entropy(scores, labels):
    """Mean softmax cross-entropy against 1-based labels, with gradient.

    Returns (loss, d loss / d scores); the gradient is already scaled for
    the per-sample mean.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n, m = scores.shape
    z = np.asarray(labels, dtype=np.int64) - 1
    if z.min() < 0 or z.max() >= m:
        raise ValueError("label out of range")
    shifted = scores - scores.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(probs[np.arange(n), z] + 1e-300)))
    grad = probs
    grad[np.arange(n), z] -= 1.0
    return loss, grad / n
