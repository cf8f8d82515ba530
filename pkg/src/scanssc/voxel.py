"""Voxel grid conventions shared by every other module.

Arrays are indexed (x, y, z[, channel]) with x = depth (front to back),
y = width (left to right) and z = height (bottom to top). Label grids hold
integer class indices with ``ignore_label`` marking unknown voxels; logit
grids and feature volumes are float arrays with a trailing channel axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

AXES = ("dep", "wid", "hgt")
AXIS_NAMES = {"dep": "depth", "wid": "width", "hgt": "height"}

IGNORE_LABEL = 255

SEMANTIC_KITTI_CLASSES = (
    "empty", "road", "sidewalk", "parking", "other-ground", "building", "car", "truck",
    "bicycle", "motorcycle", "other-vehicle", "vegetation", "trunk", "terrain", "person",
    "bicyclist", "motorcyclist", "fence", "pole", "traffic-sign",
)

# Percent of voxels per semantic class in the SemanticKITTI training split.
SEMANTIC_KITTI_FREQUENCIES = (
    15.30, 11.13, 1.12, 0.56, 14.1, 3.92, 0.16, 0.03, 0.03, 0.20,
    39.3, 0.51, 9.17, 0.07, 0.07, 0.05, 3.90, 0.29, 0.08,
)


class ConfigError(ValueError):
    pass


def axis_index(axis) -> int:
    if isinstance(axis, int) and 0 <= axis < 3:
        return axis
    try:
        return AXES.index(axis)
    except ValueError:
        raise ConfigError(f"unknown axis {axis!r}; expected one of {AXES}") from None


@dataclass(frozen=True)
class ClassTable:
    names: tuple[str, ...] = SEMANTIC_KITTI_CLASSES
    ignore_label: int = IGNORE_LABEL
    frequency_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        P = len(self.names)
        if P < 2:
            raise ConfigError("a class table needs at least two classes")
        if len(set(self.names)) != P:
            raise ConfigError("class names must be unique")
        if 0 <= self.ignore_label < P:
            raise ConfigError(f"ignore label {self.ignore_label} collides with a class index")
        if self.frequency_weights is not None:
            w = tuple(float(v) for v in self.frequency_weights)
            if len(w) != P or min(w) <= 0:
                raise ConfigError("frequency weights must be one positive value per class")
            object.__setattr__(self, "frequency_weights", w)

    @property
    def num_classes(self) -> int:
        return len(self.names)

    @classmethod
    def generic(cls, num_classes: int, ignore_label: int = IGNORE_LABEL) -> ClassTable:
        if num_classes == len(SEMANTIC_KITTI_CLASSES):
            return cls(ignore_label=ignore_label)
        return cls(("empty",) + tuple(f"class{i}" for i in range(1, num_classes)), ignore_label)

    def with_frequency_weights(self, percentages=SEMANTIC_KITTI_FREQUENCIES) -> ClassTable:
        """Inverse-log weights 1 / ln(1.02 + f) for the semantic classes.

        The empty class gets the smallest semantic weight since it dominates
        every scene.
        """
        f = np.asarray(percentages, dtype=np.float64) / 100.0
        if f.shape != (self.num_classes - 1,):
            raise ConfigError("need one frequency per semantic (non-empty) class")
        sem = 1.0 / np.log(1.02 + f)
        return ClassTable(self.names, self.ignore_label, (float(sem.min()), *map(float, sem)))


@dataclass(frozen=True)
class GridDims:
    target: tuple[int, int, int] = (256, 256, 32)
    proposal: tuple[int, int, int] = (128, 128, 16)
    channels: int = 64

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(int(v) for v in self.target))
        object.__setattr__(self, "proposal", tuple(int(v) for v in self.proposal))
        if len(self.target) != 3 or len(self.proposal) != 3:
            raise ConfigError("grid dims need three extents")
        if min(self.target + self.proposal) < 1 or self.channels < 1:
            raise ConfigError("grid extents and channels must be positive")
        for t, p in zip(self.target, self.proposal):
            if t % p:
                raise ConfigError(f"target {self.target} is not an integer multiple of {self.proposal}")

    @property
    def factors(self) -> tuple[int, int, int]:
        return tuple(t // p for t, p in zip(self.target, self.proposal))


@dataclass(frozen=True)
class AxisDirection:
    """Orientation of one axis; ``flipped`` reverses its near-to-far order."""

    axis: str
    flipped: bool = False
    index: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "index", axis_index(self.axis))


def validate_labels(labels, num_classes, ignore_label=IGNORE_LABEL) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 3 or not np.issubdtype(labels.dtype, np.integer):
        raise ConfigError(f"a label grid must be a 3D integer array, got {labels.dtype} {labels.shape}")
    bad = (labels != ignore_label) & ((labels < 0) | (labels >= num_classes))
    if bad.any():
        raise ConfigError(f"labels outside [0, {num_classes}) other than {ignore_label}")
    return labels


# axis flattening -----------------------------------------------------------

# For each scanned axis: the transpose that moves it to position 2 of
# (batch_a, batch_b, seq, C). Batch order keeps the remaining axes in order.
_FLAT_PERM = {0: (1, 2, 0, 3), 1: (0, 2, 1, 3), 2: (0, 1, 2, 3)}


def _ops(x):
    if isinstance(x, ad.Tensor):
        return ad.permute, ad.reshape
    return np.transpose, np.reshape


def flatten_for_axis(f, axis):
    """(X, Y, Z, C) -> (batch, L, C) sequences running along ``axis``.

    For depth, voxel (x, y, z) lands at batch y*Z + z, position x.
    """
    a = axis_index(axis)
    permute, reshape = _ops(f)
    perm = _FLAT_PERM[a]
    t = permute(f, perm)
    s = t.shape
    return reshape(t, (s[0] * s[1], s[2], s[3]))


def unflatten_for_axis(seq, axis, dims):
    """Inverse of :func:`flatten_for_axis` for a volume of spatial ``dims``."""
    a = axis_index(axis)
    permute, reshape = _ops(seq)
    perm = _FLAT_PERM[a]
    dims = tuple(dims)[:3]
    t = reshape(seq, (dims[perm[0]], dims[perm[1]], dims[perm[2]], seq.shape[-1]))
    return permute(t, tuple(np.argsort(perm)))


# resampling ----------------------------------------------------------------


def interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights (n_out, n_in) with cell-centre alignment.

    Sample i of the output sits at source coordinate (i + 0.5) * n_in / n_out - 0.5,
    clamped to the valid range (align_corners = False).
    """
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        s = min(max((i + 0.5) * n_in / n_out - 0.5, 0.0), n_in - 1.0)
        i0 = int(math.floor(s))
        i1 = min(i0 + 1, n_in - 1)
        w = s - i0
        m[i, i0] += 1.0 - w
        m[i, i1] += w
    return m


def pool_matrix(n: int) -> np.ndarray:
    """Average adjacent pairs: (ceil(n / 2), n); a trailing odd cell stands alone."""
    m = np.zeros(((n + 1) // 2, n))
    for i in range(n):
        m[i // 2, i] = 1.0
    return m / m.sum(axis=1, keepdims=True)


def _apply_axes(x, matrices):
    is_tensor = isinstance(x, ad.Tensor)
    out = x
    for axis, m in matrices:
        if is_tensor:
            out = ad.axis_map(out, m, axis)
        else:
            out = np.moveaxis(np.tensordot(m, out, axes=([1], [axis])), 0, axis)
    return out


def upsample_trilinear(x, factors):
    """Trilinear upsampling of the three spatial axes by positive integer factors."""
    factors = tuple(factors)
    if len(factors) != 3:
        raise ConfigError("need one upsampling factor per spatial axis")
    mats = []
    for axis, f in enumerate(factors):
        if isinstance(f, float) and not f.is_integer() or int(f) < 1:
            raise ConfigError(f"upsampling factor {f} is not a positive integer")
        f = int(f)
        if f != 1:
            n = x.shape[axis]
            mats.append((axis, interp_matrix(n, n * f)))
    return _apply_axes(x, mats)


def resize_trilinear(x, size):
    mats = [(a, interp_matrix(x.shape[a], n)) for a, n in enumerate(size) if n != x.shape[a]]
    return _apply_axes(x, mats)


def downsample2(x):
    return _apply_axes(x, [(a, pool_matrix(x.shape[a])) for a in range(3)])
