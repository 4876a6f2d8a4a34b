"""Pixel-importance accounting and subgrid selection.

The importance map is a persistent H x W matrix: each tracked pixel holds
the mean (over samples) of the summed-over-channels absolute input gradient
of the squared-error loss between a probe network's output and the current
boost weights.  Subgrids keep whole rows and columns, so a mask is the
Cartesian product of a kept-row list and a kept-column list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .nn import mse_loss


@dataclass(frozen=True)
class SubgridMask:
    """Strictly increasing kept-row / kept-column index lists."""

    rows: tuple
    cols: tuple

    def __post_init__(self):
        rows = tuple(int(r) for r in self.rows)
        cols = tuple(int(c) for c in self.cols)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        if not rows or not cols:
            raise ValueError("mask must keep at least one row and one column")
        if any(b <= a for a, b in zip(rows, rows[1:])) or any(
            b <= a for a, b in zip(cols, cols[1:])
        ):
            raise ValueError("mask indices must be strictly increasing")
        if rows[0] < 0 or cols[0] < 0:
            raise ValueError("mask indices must be non-negative")

    @property
    def pixel_count(self):
        return len(self.rows) * len(self.cols)

    def shape(self):
        return (len(self.rows), len(self.cols))

    def is_full(self, height, width):
        return self.rows == tuple(range(height)) and self.cols == tuple(range(width))


def full_mask(height, width):
    return SubgridMask(tuple(range(height)), tuple(range(width)))


def slice_batch(inputs, mask):
    """Copy kept rows/columns out of an NCHW batch, preserving order."""
    inputs = np.asarray(inputs)
    if mask.rows[-1] >= inputs.shape[2] or mask.cols[-1] >= inputs.shape[3]:
        raise GeometryError(
            f"mask extent ({mask.rows[-1]}, {mask.cols[-1]}) outside input "
            f"{inputs.shape[2]}x{inputs.shape[3]}"
        )
    out = inputs[:, :, mask.rows, :][:, :, :, mask.cols]
    return np.ascontiguousarray(out)


class ImportanceMap:
    """Persistent per-pixel importance values (always >= 0)."""

    def __init__(self, height, width):
        self.height = height
        self.width = width
        self.values = np.zeros((height, width), dtype=np.float64)

    def copy(self):
        m = ImportanceMap(self.height, self.width)
        m.values = self.values.copy()
        return m


def update_importance(imp, probe, inputs, weights, active, chunk=1024):
    """Recompute importance at the pixels of ``active``; leave the rest alone.

    The probe network sees the full-size inputs; for each sample the input
    gradient of ``sum||probe(x) - w||^2`` is taken, absolute values are
    summed over channels, and the per-pixel mean over samples replaces the
    map entry wherever ``active`` keeps the pixel.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = inputs.shape[0]
    if inputs.shape[2] != imp.height or inputs.shape[3] != imp.width:
        raise GeometryError(
            f"batch spatial size {inputs.shape[2]}x{inputs.shape[3]} != importance "
            f"map {imp.height}x{imp.width}"
        )
    acc = np.zeros((imp.height, imp.width), dtype=np.float64)
    for start in range(0, n, chunk):
        xb = inputs[start : start + chunk]
        pred = probe.forward(xb)
        _, grad = mse_loss(pred, weights[start : start + chunk])
        gx = probe.backward(grad, wrt_input=True)
        acc += np.abs(gx).sum(axis=1).sum(axis=0)
    acc /= n
    rsel = np.asarray(active.rows)
    csel = np.asarray(active.cols)
    imp.values[np.ix_(rsel, csel)] = acc[np.ix_(rsel, csel)]
    return imp


def row_col_scores(imp):
    """Row score = row sum / width; column score = column sum / height."""
    rows = imp.values.sum(axis=1) / imp.width
    cols = imp.values.sum(axis=0) / imp.height
    return rows, cols


def _top_indices(scores, count):
    # stable sort on negated scores keeps the lower index first on ties
    order = np.argsort(-scores, kind="stable")[:count]
    return tuple(sorted(int(i) for i in order))


def select_subgrid(imp, keep_row_frac, keep_col_frac):
    """Keep the ceil(frac * extent) best-scoring rows and columns."""
    if not (0.0 < keep_row_frac <= 1.0) or not (0.0 < keep_col_frac <= 1.0):
        raise ValueError("keep fractions must be in (0, 1]")
    row_scores, col_scores = row_col_scores(imp)
    n_rows = math.ceil(keep_row_frac * imp.height)
    n_cols = math.ceil(keep_col_frac * imp.width)
    return SubgridMask(_top_indices(row_scores, n_rows), _top_indices(col_scores, n_cols))


def dump_importance_csv(imp, path):
    """Full-precision row-major CSV of the raw values."""
    np.savetxt(path, imp.values, delimiter=",", fmt="%.17g")


def dump_importance_pgm(imp, path):
    """8-bit binary PGM, min-max normalized for visual inspection."""
    v = imp.values
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{imp.width} {imp.height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
