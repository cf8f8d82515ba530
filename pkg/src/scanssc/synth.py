"""Deterministic synthetic label grids for desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .voxel import ConfigError

PRESETS = ("corridor", "blocks", "random")

# indices into the default 20-class table
EMPTY, ROAD, SIDEWALK, BUILDING, CAR, TRUCK = 0, 1, 2, 5, 6, 7


def corridor(dims, seed=0, num_classes=20) -> np.ndarray:
    """A street receding in depth: ground plane, side buildings and box vehicles.

    Buildings are columns of random height, so occupancy never grows with z.
    """
    X, Y, Z = dims
    if num_classes < 20:
        raise ConfigError("corridor preset uses the 20-class table")
    rng = np.random.default_rng(seed)
    g = np.zeros(dims, dtype=np.int64)
    side = max(1, Y // 8)
    g[:, :, 0] = ROAD
    g[:, :side, 0] = SIDEWALK
    g[:, Y - side:, 0] = SIDEWALK
    if Z == 1:
        return g
    seg = max(1, X // 4)
    for start in range(0, X, seg):
        for ys in (slice(0, side), slice(Y - side, Y)):
            top = int(rng.integers(max(2, Z // 2), Z + 1))
            g[start:start + seg, ys, 1:top] = BUILDING
    lane_lo, lane_hi = side + 1, Y - side - 1
    car_len, car_w = max(1, X // 8), max(1, Y // 8)
    x = int(rng.integers(0, max(1, X // 8)))
    while x + car_len <= X and lane_hi - lane_lo >= car_w:
        y = int(rng.integers(lane_lo, lane_hi - car_w + 1))
        truck = rng.random() < 0.3 and Z >= 4
        height = max(2, Z // 2) if truck else 2
        g[x:x + car_len, y:y + car_w, 1:height] = TRUCK if truck else CAR
        x += car_len + int(rng.integers(1, max(2, X // 4)))
    return g


def blocks(dims, seed=0, num_classes=20, count=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = np.zeros(dims, dtype=np.int64)
    count = count if count is not None else max(1, int(np.prod(dims)) // 64)
    for _ in range(count):
        lo = [int(rng.integers(0, n)) for n in dims]
        size = [int(rng.integers(1, max(2, n // 3 + 1))) for n in dims]
        g[tuple(slice(a, a + s) for a, s in zip(lo, size))] = int(rng.integers(1, num_classes))
    return g


def random_grid(dims, seed=0, num_classes=20) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, num_classes, size=dims).astype(np.int64)


def generate(preset, dims, seed=0, num_classes=20) -> np.ndarray:
    dims = tuple(int(v) for v in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ConfigError(f"dims must be three positive extents, got {dims}")
    if preset == "corridor":
        return corridor(dims, seed, num_classes)
    if preset == "blocks":
        return blocks(dims, seed, num_classes)
    if preset == "random":
        return random_grid(dims, seed, num_classes)
    raise ConfigError(f"unknown preset {preset!r}; expected one of {PRESETS}")
