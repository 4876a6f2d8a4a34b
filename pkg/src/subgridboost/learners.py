"""Weak-learner catalog: architecture presets, warm starting, the probe
network used for importance maps, and the minibatch training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, NumericError
from .nn import (
    Network,
    conv_spec,
    dense_spec,
    flatten_spec,
    mse_loss,
    pool_spec,
    relu_spec,
    softmax_cross_entropy,
)
from .optim import Adam


@dataclass(frozen=True)
class ArchitectureProfile:
    """Named layer recipe; the feature extractor is fully convolutional."""

    name: str
    feature_specs: tuple  # conv/pool/relu/flatten specs, size-agnostic

    def specs(self, n_classes):
        return list(self.feature_specs) + [dense_spec(n_classes)]

    def split_index(self):
        return len(self.feature_specs)


PROFILES = {
    "tiny-cnn-2conv": ArchitectureProfile(
        "tiny-cnn-2conv",
        (
            conv_spec(8, 3, pad=1),
            relu_spec(),
            pool_spec(2),
            conv_spec(16, 3, pad=1),
            relu_spec(),
            pool_spec(2),
            flatten_spec(),
        ),
    ),
    "small-cnn-3conv": ArchitectureProfile(
        "small-cnn-3conv",
        (
            conv_spec(8, 3, pad=1),
            relu_spec(),
            pool_spec(2),
            conv_spec(16, 3, pad=1),
            relu_spec(),
            pool_spec(2),
            conv_spec(32, 3, pad=1),
            relu_spec(),
            flatten_spec(),
        ),
    ),
}


def get_profile(name):
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown architecture profile {name!r}") from None


@dataclass
class WeakLearner:
    """A network plus the input geometry it was built for."""

    net: Network
    geometry: tuple  # (C, H, W)
    profile: str
    role: str = "basic"  # basic | additive

    def scores(self, inputs):
        return self.net.forward(np.asarray(inputs, dtype=np.float64))


def _build_network(profile, geometry, n_classes, rng):
    specs = profile.specs(n_classes)
    layers = []
    geom = tuple(geometry)
    for i, spec in enumerate(specs):
        try:
            layer = spec.build(geom, rng)
            geom = layer.out_geometry(geom)
        except GeometryError as e:
            raise GeometryError(f"profile {profile.name!r}, layer {i}: {e}") from None
        layers.append(layer)
    return Network(layers, profile.split_index())


def build_basic_learner(profile_name, geometry, n_classes, seed):
    """Seeded construction of a full-image learner."""
    profile = get_profile(profile_name)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    net = _build_network(profile, geometry, n_classes, rng)
    return WeakLearner(net, tuple(geometry), profile_name, role="basic")


def warm_start_learner(prev, mask, n_classes, seed):
    """New learner for ``mask``'s geometry: extractor values copied from
    ``prev``, classifier freshly initialized for the sliced feature width."""
    profile = get_profile(prev.profile)
    geometry = (prev.geometry[0], len(mask.rows), len(mask.cols))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    net = _build_network(profile, geometry, n_classes, rng)
    for fresh, src in zip(net.feature_extractor, prev.net.feature_extractor):
        for p_fresh, p_src in zip(fresh.params(), src.params()):
            p_fresh.data = p_src.data.copy()
    return WeakLearner(net, geometry, prev.profile, role="additive")


def build_probe(prev, basic):
    """Full-size network: ``prev``'s feature extractor ahead of ``basic``'s
    classifier, with no parameters shared by reference with either."""
    rng = np.random.default_rng(0)  # placeholder init, overwritten below
    profile = get_profile(basic.profile)
    net = _build_network(profile, basic.geometry, basic.net.layers[-1].out_width, rng)
    if len(net.feature_extractor) != len(prev.net.feature_extractor):
        raise GeometryError(
            f"extractor of {prev.profile!r} does not match classifier host {basic.profile!r}"
        )
    for fresh, src in zip(net.feature_extractor, prev.net.feature_extractor):
        for p_fresh, p_src in zip(fresh.params(), src.params()):
            if p_fresh.data.shape != p_src.data.shape:
                raise GeometryError(
                    f"extractor parameter shape {p_src.data.shape} does not match "
                    f"probe layout {p_fresh.data.shape}"
                )
            p_fresh.data = p_src.data.copy()
    for fresh, src in zip(net.classifier, basic.net.classifier):
        for p_fresh, p_src in zip(fresh.params(), src.params()):
            if p_fresh.data.shape != p_src.data.shape:
                raise GeometryError(
                    f"classifier width {p_src.data.shape} does not fit full-size "
                    f"features {p_fresh.data.shape}"
                )
            p_fresh.data = p_src.data.copy()
    return net


@dataclass
class TrainResult:
    epoch_losses: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")


def train_weak_learner(
    learner,
    inputs,
    targets,
    *,
    epochs,
    lr,
    weight_decay,
    batch_size,
    seed=None,
    shuffle_rng=None,
    loss_mode="ls-weights",
    freeze_extractor=False,
    optimizer=None,
    result=None,
):
    """Minibatch ADAM training of one learner.

    ``ls-weights`` fits the outputs to the target vectors by squared error;
    ``cross-entropy`` treats targets as 1-based labels.  Per-batch losses
    use the sample mean so step sizes do not depend on batch size; each
    recorded epoch loss is the epoch's summed loss divided by n.  Passing
    ``shuffle_rng``/``optimizer``/``result`` lets a caller continue training
    across calls with intact state.
    """
    if loss_mode not in ("ls-weights", "cross-entropy"):
        raise ValueError(f"unknown loss mode {loss_mode!r}")
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[1:] != tuple(learner.geometry):
        raise GeometryError(
            f"batch geometry {inputs.shape[1:]} != learner geometry {learner.geometry}"
        )
    n = inputs.shape[0]
    targets = np.asarray(targets)
    if shuffle_rng is None:
        shuffle_rng = np.random.default_rng(np.random.SeedSequence(seed))
    if optimizer is None:
        params = (
            [p for layer in learner.net.classifier for p in layer.params()]
            if freeze_extractor
            else learner.net.params()
        )
        optimizer = Adam(params, lr=lr, weight_decay=weight_decay)
    if result is None:
        result = TrainResult()

    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            sel = order[start : start + batch_size]
            xb = inputs[sel]
            out = learner.net.forward(xb)
            if loss_mode == "ls-weights":
                loss, grad = mse_loss(out, targets[sel])
                loss /= len(sel)
                grad = grad / len(sel)
            else:
                loss, grad = softmax_cross_entropy(out, targets[sel])
            if not np.isfinite(loss):
                raise NumericError(f"training diverged (non-finite loss) at epoch {epoch + 1}")
            total += loss * len(sel)
            learner.net.zero_grad()
            learner.net.backward(grad)
            optimizer.step()
        result.epoch_losses.append(total / n)
    return result
