"""Multiclass boosting machinery: exponential pairwise risk, boost weights,
functional gradient, convex line search, and the staged ensemble predictor.

Scores are (n, M) float64 arrays; labels are 1-based integers in 1..M.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, NumericError
from .subgrid import SubgridMask, slice_batch


def multiclass_loss(f_x, z, n_classes=None):
    """Pairwise exponential loss of one score vector against label ``z``.

    Equals ``M - 1`` when all scores are zero; invariant to adding a
    constant to every coordinate.
    """
    f_x = np.asarray(f_x, dtype=np.float64)
    m = f_x.shape[0] if n_classes is None else n_classes
    if not 1 <= z <= m:
        raise ValueError(f"label {z} out of range 1..{m}")
    margins = f_x[z - 1] - f_x
    total = np.exp(-0.5 * margins).sum() - 1.0  # drop the j == z term (e^0)
    return float(total)


def risk_of_scores(scores, labels):
    """Mean multiclass loss of per-sample score rows."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, m = scores.shape
    if n == 0:
        raise ValueError("empty batch")
    fz = scores[np.arange(n), labels - 1]
    e = np.exp(-0.5 * (fz[:, None] - scores))
    return float((e.sum(axis=1) - 1.0).mean())


def compute_boost_weights(scores, labels):
    """Per-sample weight vectors w = -2 * d(loss)/d(scores).

    Row sums are exactly zero; the true-class entry is positive and every
    other entry negative.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, m = scores.shape
    if labels.min() < 1 or labels.max() > m:
        raise ValueError("label out of range")
    fz = scores[np.arange(n), labels - 1]
    e = np.exp(-0.5 * (fz[:, None] - scores))
    w = -e
    # e[i, z] == exp(0) == 1, so the row sum below cancels it exactly
    w[np.arange(n), labels - 1] = e.sum(axis=1) - 1.0
    return w


def functional_gradient(g_scores, weights):
    """Directional derivative of the risk along candidate scores ``g``."""
    g_scores = np.asarray(g_scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if g_scores.shape != weights.shape:
        raise ValueError(f"shape mismatch: {g_scores.shape} vs {weights.shape}")
    n = g_scores.shape[0]
    return float(-np.sum(g_scores * weights) / (2.0 * n))


def _risk_derivative(base, g, labels, alpha):
    """d/d alpha of risk(base + alpha * g) in closed form."""
    n, m = base.shape
    idx = np.arange(n)
    scores = base + alpha * g
    fz = scores[idx, labels - 1]
    gz = g[idx, labels - 1]
    e = np.exp(-0.5 * (fz[:, None] - scores))
    d = -0.5 * (gz[:, None] - g) * e
    # the j == z diagonal contributes zero (gz - gz == 0) so no masking needed
    return float(d.sum() / n)


def line_search(base_scores, g_scores, labels, alpha_max=10.0, tol=1e-6, max_iter=200):
    """Minimize risk(base + alpha * g) over [0, alpha_max].

    The objective is a positive sum of exponentials in alpha (convex), so
    bisection on its derivative either meets ``tol`` at an interior point or
    returns a boundary.
    """
    if alpha_max <= 0:
        raise ValueError("alpha_max must be positive")
    base = np.asarray(base_scores, dtype=np.float64)
    g = np.asarray(g_scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)

    d0 = _risk_derivative(base, g, labels, 0.0)
    if not np.isfinite(d0):
        raise NumericError("non-finite risk derivative at alpha=0")
    if d0 >= 0.0:
        return 0.0
    d1 = _risk_derivative(base, g, labels, alpha_max)
    if not np.isfinite(d1):
        raise NumericError(f"non-finite risk derivative at alpha={alpha_max}")
    if d1 <= 0.0:
        return float(alpha_max)

    lo, hi = 0.0, float(alpha_max)
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        d = _risk_derivative(base, g, labels, mid)
        if not np.isfinite(d):
            raise NumericError(f"non-finite risk derivative at alpha={mid}")
        if abs(d) <= tol:
            return mid
        if d < 0.0:
            lo = mid
        else:
            hi = mid
    return mid


@dataclass
class Stage:
    """One additive round: a trained learner, its step size, and its subgrid."""

    learner: "WeakLearner"  # noqa: F821 - defined in learners.py
    step_size: float
    mask: SubgridMask


@dataclass
class BoostEnsemble:
    """Staged predictor: basic learner plus shrinkage-damped additive stages."""

    basic: "WeakLearner"  # noqa: F821
    n_classes: int
    shrinkage: float
    stages: list = field(default_factory=list)

    def scores(self, inputs, chunk=1024):
        """(n, M) ensemble scores for a batch of full-size inputs."""
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.shape[1:] != tuple(self.basic.geometry):
            raise GeometryError(
                f"input geometry {inputs.shape[1:]} != basic learner {self.basic.geometry}"
            )
        n = inputs.shape[0]
        out = np.empty((n, self.n_classes), dtype=np.float64)
        for start in range(0, n, chunk):
            xb = inputs[start : start + chunk]
            total = self.basic.net.forward(xb)
            for stage in self.stages:
                xs = slice_batch(xb, stage.mask)
                total = total + self.shrinkage * stage.step_size * stage.learner.net.forward(xs)
            out[start : start + chunk] = total
        return out

    def predict(self, inputs):
        """1-based class labels (argmax of the scores)."""
        return np.argmax(self.scores(inputs), axis=1) + 1

    def stage_count(self):
        return len(self.stages)


def ensemble_risk(ensemble, inputs, labels):
    return risk_of_scores(ensemble.scores(inputs), labels)


@dataclass
class RoundResult:
    step_size: float
    risk_before: float
    risk_after: float
    train_loss: float


def boost_round(
    ensemble,
    inputs,
    labels,
    mask,
    learner,
    *,
    epochs,
    lr,
    weight_decay,
    batch_size,
    shuffle_rng,
    alpha_max=10.0,
    loss_mode="ls-weights",
    freeze_extractor=False,
):
    """Train one additive stage and append it to the ensemble.

    ``learner`` must already be constructed for ``mask``'s geometry (warm
    started by the caller).  Targets are the current boost weights in
    ``ls-weights`` mode or the labels in ``cross-entropy`` mode; the step
    size comes from the exact line search and is clamped to 0 if the
    shrunk update would not reduce the risk.
    """
    from .learners import train_weak_learner

    base = ensemble.scores(inputs)
    weights = compute_boost_weights(base, labels)
    sliced = slice_batch(inputs, mask)
    targets = weights if loss_mode == "ls-weights" else labels
    result = train_weak_learner(
        learner,
        sliced,
        targets,
        epochs=epochs,
        lr=lr,
        weight_decay=weight_decay,
        batch_size=batch_size,
        shuffle_rng=shuffle_rng,
        loss_mode=loss_mode,
        freeze_extractor=freeze_extractor,
    )
    g = learner.net.forward(sliced)
    step = line_search(base, g, labels, alpha_max=alpha_max)
    risk_before = risk_of_scores(base, labels)
    risk_after = risk_of_scores(base + ensemble.shrinkage * step * g, labels)
    if risk_after > risk_before:
        step = 0.0
        risk_after = risk_before
    ensemble.stages.append(Stage(learner, step, mask))
    return RoundResult(step, risk_before, risk_after, result.final_loss)
