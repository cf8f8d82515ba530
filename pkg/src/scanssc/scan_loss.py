"""Cumulative-average cross-entropy along each grid axis.

Each axis is cut into segments and every position takes the mean over a
window that grows from one end of its segment:

* depth: one segment, windows [x, X) (accumulated from the back);
* width: [0, Y // 2) with windows [0, y], and [Y // 2, Y) with windows [y, Y)
  (accumulated from each side toward the centre);
* height: one segment, windows [0, z] (accumulated from the bottom).

Logits are averaged first and the softmax is taken afterwards. Targets are
the matching averages of one-hot labels, with ignored voxels dropped from
both numerator and denominator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .voxel import AXES, IGNORE_LABEL, ConfigError, axis_index

PREFIX, SUFFIX = "prefix", "suffix"


def window_plan(axis, L, flipped=False, flip_mode="reflect"):
    """Segments ``(start, stop, kind)`` covering [0, L) for one axis.

    ``prefix`` windows run from the segment start to the position, ``suffix``
    windows from the position to the segment end. ``reflect`` flipping mirrors
    the plan (the operator seen by an axis-reversed grid); ``reverse`` keeps the
    segments but swaps the accumulation end.
    """
    a = axis_index(axis)
    if a == 0:
        plan = [(0, L, SUFFIX)]
    elif a == 2:
        plan = [(0, L, PREFIX)]
    else:
        c = L // 2
        plan = [(0, c, PREFIX), (c, L, SUFFIX)]
    plan = [s for s in plan if s[1] > s[0]]
    if not flipped:
        return plan
    other = {PREFIX: SUFFIX, SUFFIX: PREFIX}
    if flip_mode == "reflect":
        return sorted((L - stop, L - start, other[kind]) for start, stop, kind in plan)
    if flip_mode == "reverse":
        return [(start, stop, other[kind]) for start, stop, kind in plan]
    raise ConfigError(f"unknown flip mode {flip_mode!r}")


def _slicer(ndim, axis, start, stop):
    key = [slice(None)] * ndim
    key[axis] = slice(start, stop)
    return tuple(key)


def cumulative_average(g, axis, flipped=False, flip_mode="reflect"):
    """Differentiable axis-wise cumulative average of a logit grid (X, Y, Z, P)."""
    g = ad.as_tensor(g)
    a = axis_index(axis)
    parts = [ad.cumulative_mean(g[_slicer(g.ndim, a, s, e)], a, reverse=(kind == SUFFIX))
             for s, e, kind in window_plan(a, g.shape[a], flipped, flip_mode)]
    return parts[0] if len(parts) == 1 else ad.concat(parts, axis=a)


def cumulative_average_depth(g):
    return cumulative_average(g, "dep")


def cumulative_average_width(g):
    return cumulative_average(g, "wid")


def cumulative_average_height(g):
    return cumulative_average(g, "hgt")


def _window_sums(x, axis, plan):
    out = np.empty_like(x)
    for s, e, kind in plan:
        key = _slicer(x.ndim, axis, s, e)
        seg = x[key]
        if kind == PREFIX:
            out[key] = np.cumsum(seg, axis=axis)
        else:
            out[key] = np.flip(np.cumsum(np.flip(seg, axis), axis=axis), axis)
    return out


@dataclass(frozen=True)
class CumulativeTargets:
    axis: str
    distributions: np.ndarray  # (X, Y, Z, P), zero where valid_mass == 0
    valid_mass: np.ndarray  # (X, Y, Z) count of non-ignored voxels in each window

    @property
    def valid(self) -> np.ndarray:
        return self.valid_mass > 0


def cumulative_targets(labels, axis, num_classes, ignore_label=IGNORE_LABEL,
                       flipped=False, flip_mode="reflect") -> CumulativeTargets:
    labels = np.asarray(labels)
    a = axis_index(axis)
    keep = labels != ignore_label
    onehot = np.zeros(labels.shape + (num_classes,))
    np.put_along_axis(onehot, np.where(keep, labels, 0)[..., None].astype(np.intp), 1.0, axis=-1)
    onehot *= keep[..., None]
    plan = window_plan(a, labels.shape[a], flipped, flip_mode)
    sums = _window_sums(onehot, a, plan)
    mass = _window_sums(keep.astype(np.float64), a, plan)
    dist = np.divide(sums, mass[..., None], out=np.zeros_like(sums), where=mass[..., None] > 0)
    return CumulativeTargets(AXES[a], dist, mass)


def scan_ce(cum_logits, targets: CumulativeTargets):
    """Mean over valid positions of -sum_c target_c * log softmax(cum_logits)_c."""
    cl = ad.as_tensor(cum_logits)
    if cl.shape != targets.distributions.shape:
        raise ConfigError(f"logit shape {cl.shape} != target shape {targets.distributions.shape}")
    n = int(targets.valid.sum())
    if n == 0:
        warnings.warn(f"scan loss ({targets.axis}): no valid positions, term set to 0",
                      RuntimeWarning, stacklevel=2)
        return ad.Tensor(0.0)
    per_pos = ad.sum(ad.log_softmax(cl, axis=-1) * targets.distributions, axis=-1)
    return ad.sum(per_pos * targets.valid) * (-1.0 / n)


def scan_loss_terms(g, labels, axes=AXES, flips=(), flip_mode="reflect",
                    ignore_label=IGNORE_LABEL) -> dict:
    """Per-axis scan loss tensors for the enabled ``axes``; ``flips`` lists reversed axes."""
    g = ad.as_tensor(g)
    labels = np.asarray(labels)
    if g.shape[:3] != labels.shape:
        raise ConfigError(f"logit grid {g.shape} does not match label grid {labels.shape}")
    P = g.shape[3]
    terms = {}
    for axis in axes:
        flipped = axis in flips
        cl = cumulative_average(g, axis, flipped, flip_mode)
        ct = cumulative_targets(labels, axis, P, ignore_label, flipped, flip_mode)
        terms[AXES[axis_index(axis)]] = scan_ce(cl, ct)
    return terms


def scan_loss_total(g, labels, axes=AXES, flips=(), flip_mode="reflect",
                    ignore_label=IGNORE_LABEL):
    terms = scan_loss_terms(g, labels, axes, flips, flip_mode, ignore_label)
    total = ad.Tensor(0.0)
    for t in terms.values():
        total = total + t
    return total
