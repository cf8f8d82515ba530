"""Axis-specific cascade attention masks.

``blocked[i, j]`` is true when query i may not attend key j. Indices are
0-based here; the cascade lets each query see itself and the keys that are
nearer to the viewpoint than it is:

* depth: nearer means smaller x, so keys j > i are blocked (strict upper triangle);
* height: nearer means higher z, so keys j < i are blocked (strict lower triangle);
* width: nearer means closer to the centre, giving two triangles that meet
  at the centre (the hourglass).

A margin region of near-viewpoint indices is additionally unblocked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .voxel import AXES, ConfigError

MARGIN_DEFAULTS = {"dep": 0.5, "wid": 0.25, "hgt": 0.0}
WIDTH_MODES = ("same_side", "distance_rank")
MARGIN_MODES = ("mutual", "key")
FLIP_MODES = ("reflect", "reverse")


@dataclass(frozen=True)
class AttentionMask:
    blocked: np.ndarray
    axis: str
    margin_ratio: float
    flipped: bool = False

    def __post_init__(self):
        b = np.array(self.blocked, dtype=bool)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ConfigError(f"mask must be square, got {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "blocked", b)

    @property
    def length(self) -> int:
        return self.blocked.shape[0]

    @property
    def allowed(self) -> np.ndarray:
        return ~self.blocked

    def __eq__(self, other):
        if not isinstance(other, AttentionMask):
            return NotImplemented
        return np.array_equal(self.blocked, other.blocked)

    __hash__ = None

    def ascii(self, blocked_char="#", allowed_char=".") -> str:
        return "\n".join(
            "".join(blocked_char if v else allowed_char for v in row) for row in self.blocked
        ) + "\n"

    def to_pgm(self) -> bytes:
        """Binary PGM; allowed cells white, blocked cells black."""
        L = self.length
        pixels = np.where(self.blocked, 0, 255).astype(np.uint8)
        return f"P5\n{L} {L}\n255\n".encode("ascii") + pixels.tobytes()


def _check(L, margin_ratio):
    if int(L) != L or L < 1:
        raise ConfigError(f"mask length must be a positive integer, got {L}")
    if not 0.0 <= margin_ratio <= 1.0:
        raise ConfigError(f"margin ratio must lie in [0, 1], got {margin_ratio}")


def margin_size(L: int, margin_ratio: float) -> int:
    # tolerance absorbs binary representation error such as 0.29 * 100
    return int(math.floor(margin_ratio * L + 1e-9))


def _apply_margin(blocked, members, margin_mode):
    if margin_mode not in MARGIN_MODES:
        raise ConfigError(f"unknown margin mode {margin_mode!r}")
    inside = np.zeros(blocked.shape[0], dtype=bool)
    inside[members] = True
    if margin_mode == "mutual":
        clear = inside[:, None] & inside[None, :]
    else:
        clear = np.broadcast_to(inside[None, :], blocked.shape)
    return blocked & ~clear


def build_depth_mask(L: int, margin_ratio: float = MARGIN_DEFAULTS["dep"],
                     margin_mode: str = "mutual") -> AttentionMask:
    _check(L, margin_ratio)
    i, j = np.indices((L, L))
    blocked = j > i
    blocked = _apply_margin(blocked, slice(0, margin_size(L, margin_ratio)), margin_mode)
    return AttentionMask(blocked, "dep", margin_ratio)


def build_height_mask(L: int, margin_ratio: float = MARGIN_DEFAULTS["hgt"],
                      margin_mode: str = "mutual") -> AttentionMask:
    _check(L, margin_ratio)
    i, j = np.indices((L, L))
    blocked = j < i
    m = margin_size(L, margin_ratio)
    blocked = _apply_margin(blocked, slice(L - m, L), margin_mode)
    return AttentionMask(blocked, "hgt", margin_ratio)


def build_width_mask(L: int, margin_ratio: float = MARGIN_DEFAULTS["wid"],
                     width_mode: str = "same_side", margin_mode: str = "mutual") -> AttentionMask:
    """Hourglass mask; ``margin_ratio`` is the share of L unblocked on each side of centre.

    The left half is indices [0, L // 2), so for odd L the middle index
    belongs to the right half.
    """
    _check(L, margin_ratio)
    i, j = np.indices((L, L))
    c = L // 2
    if width_mode == "same_side":
        left = (i < c) & (j >= i) & (j < c)
        right = (i >= c) & (j >= c) & (j <= i)
        blocked = ~(left | right)
    elif width_mode == "distance_rank":
        centre = (L - 1) / 2.0
        blocked = np.abs(j - centre) > np.abs(i - centre)
    else:
        raise ConfigError(f"unknown width mode {width_mode!r}")
    m = margin_size(L, margin_ratio)
    blocked = _apply_margin(blocked, slice(max(0, c - m), min(L, c + m)), margin_mode)
    return AttentionMask(blocked, "wid", margin_ratio)


def flip_mask(mask: AttentionMask, mode: str = "reflect") -> AttentionMask:
    """Reverse the scan direction of a mask.

    ``reflect`` mirrors both indices (blocked'[i, j] = blocked[L-1-i, L-1-j]),
    which is the mask seen by an axis-reversed input. ``reverse`` transposes,
    swapping which side of the cascade is visible. For the triangular depth
    and height masks at margin 0 the two coincide.
    """
    if mode == "reflect":
        blocked = mask.blocked[::-1, ::-1]
    elif mode == "reverse":
        blocked = mask.blocked.T
    else:
        raise ConfigError(f"unknown flip mode {mode!r}")
    return AttentionMask(blocked, mask.axis, mask.margin_ratio, not mask.flipped)


def build_mask(axis: str, L: int, margin_ratio: float | None = None, flipped: bool = False,
               *, flip_mode: str = "reflect", width_mode: str = "same_side",
               margin_mode: str = "mutual") -> AttentionMask:
    if axis not in AXES:
        raise ConfigError(f"unknown axis {axis!r}; expected one of {AXES}")
    r = MARGIN_DEFAULTS[axis] if margin_ratio is None else margin_ratio
    if axis == "dep":
        m = build_depth_mask(L, r, margin_mode)
    elif axis == "hgt":
        m = build_height_mask(L, r, margin_mode)
    else:
        m = build_width_mask(L, r, width_mode, margin_mode)
    return flip_mask(m, flip_mode) if flipped else m
