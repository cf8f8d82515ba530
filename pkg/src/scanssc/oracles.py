"""Brute-force reference implementations and randomized comparison suites.

Each oracle is written with explicit loops straight from the definitions,
sharing no code with the vectorized implementation it checks. A trial is
seeded by ``(seed, trial)`` so any single trial can be replayed alone.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import masks as masks_mod
from . import scan_loss
from .scan_module import FusionParams, fuse_tri_features
from .voxel import AXES, IGNORE_LABEL

SUITES = ("masks", "cumavg", "scanloss", "fusion")
TOLERANCES = {"masks": 1e-12, "cumavg": 1e-12, "scanloss": 1e-10, "fusion": 1e-12}


# reference definitions -------------------------------------------------------

def mask_oracle(axis, L, margin_ratio, width_mode="same_side", margin_mode="mutual"):
    """Blocked matrix enumerated entry by entry."""
    m = int(math.floor(margin_ratio * L + 1e-9))
    c = L // 2
    if axis == "dep":
        band = set(range(m))
    elif axis == "hgt":
        band = set(range(L - m, L))
    else:
        band = set(range(max(0, c - m), min(L, c + m)))
    out = np.zeros((L, L), dtype=bool)
    for i in range(L):
        for j in range(L):
            if axis == "dep":
                ok = j <= i
            elif axis == "hgt":
                ok = j >= i
            elif width_mode == "same_side":
                ok = (i < c and i <= j < c) or (i >= c and c <= j <= i)
            else:
                ok = abs(2 * j - (L - 1)) <= abs(2 * i - (L - 1))
            if margin_mode == "mutual":
                ok = ok or (i in band and j in band)
            else:
                ok = ok or j in band
            out[i, j] = not ok
    return out


def window_indices(axis, L, pos):
    """Positions averaged into ``pos`` along an axis of length L."""
    if axis == "dep":
        return list(range(pos, L))
    if axis == "hgt":
        return list(range(0, pos + 1))
    c = L // 2
    return list(range(0, pos + 1)) if pos < c else list(range(pos, L))


def cumavg_oracle(g, axis):
    g = np.asarray(g, dtype=np.float64)
    a = AXES.index(axis)
    out = np.empty_like(g)
    L = g.shape[a]
    for idx in np.ndindex(*g.shape[:3]):
        win = window_indices(axis, L, idx[a])
        acc = np.zeros(g.shape[3])
        for w in win:
            src = list(idx)
            src[a] = w
            acc = acc + g[tuple(src)]
        out[idx] = acc / len(win)
    return out


def scan_loss_oracle(g, labels, axis, ignore_label=IGNORE_LABEL):
    """Mean over positions with any labeled voxel in the window of soft-target CE."""
    g = np.asarray(g, dtype=np.float64)
    a = AXES.index(axis)
    L, P = g.shape[a], g.shape[3]
    total, count = 0.0, 0
    for idx in np.ndindex(*g.shape[:3]):
        logit = np.zeros(P)
        hist = np.zeros(P)
        win = window_indices(axis, L, idx[a])
        for w in win:
            src = list(idx)
            src[a] = w
            src = tuple(src)
            logit += g[src]
            if labels[src] != ignore_label:
                hist[labels[src]] += 1.0
        if hist.sum() == 0:
            continue
        logit /= len(win)
        top = max(logit)
        lse = top + math.log(sum(math.exp(v - top) for v in logit))
        total -= sum(hist[k] / hist.sum() * (logit[k] - lse) for k in range(P))
        count += 1
    return total / count if count else 0.0


def fusion_oracle(f_dep, f_wid, f_hgt, weight, bias):
    """Per-voxel softmax weights and fused features."""
    shape = f_dep.shape
    w_out = np.empty(shape[:3] + (3,))
    out = np.empty(shape)
    for idx in np.ndindex(*shape[:3]):
        feats = [f_dep[idx], f_wid[idx], f_hgt[idx]]
        z = np.concatenate(feats)
        s = [sum(z[r] * weight[r, k] for r in range(z.size)) + bias[k] for k in range(3)]
        top = max(s)
        e = [math.exp(v - top) for v in s]
        w = [v / sum(e) for v in e]
        w_out[idx] = w
        out[idx] = w[0] * feats[0] + w[1] * feats[1] + w[2] * feats[2]
    return w_out, out


# suites ------------------------------------------------------------------------

@dataclass
class Trial:
    suite: str
    seed: int
    trial: int
    deviation: float
    inputs: dict


def _dims(rng, hi=(8, 8, 4)):
    return tuple(int(rng.integers(1, h + 1)) for h in hi)


def _masks_trial(rng):
    axis = AXES[int(rng.integers(3))]
    L = int(rng.integers(1, 33))
    r = float(rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]))
    width_mode = str(rng.choice(masks_mod.WIDTH_MODES))
    margin_mode = str(rng.choice(masks_mod.MARGIN_MODES))
    got = masks_mod.build_mask(axis, L, r, width_mode=width_mode, margin_mode=margin_mode)
    want = mask_oracle(axis, L, r, width_mode, margin_mode)
    dev = float(np.count_nonzero(got.blocked != want))
    for mode in masks_mod.FLIP_MODES:
        back = masks_mod.flip_mask(masks_mod.flip_mask(got, mode), mode)
        dev += float(np.count_nonzero(back.blocked != got.blocked))
    return dev, {"axis": axis, "length": L, "margin": r, "width_mode": width_mode,
                 "margin_mode": margin_mode}


def _cumavg_trial(rng):
    dims = _dims(rng)
    g = rng.normal(0.0, 1.0, size=dims + (int(rng.integers(1, 7)),))
    dev = 0.0
    for axis in AXES:
        got = scan_loss.cumulative_average(g, axis).data
        dev = max(dev, float(np.max(np.abs(got - cumavg_oracle(g, axis)))))
    return dev, {"logits": g.tolist()}


def _scanloss_trial(rng):
    dims = _dims(rng)
    P = int(rng.integers(2, 7))
    g = rng.normal(0.0, 2.0, size=dims + (P,))
    labels = rng.integers(0, P, size=dims)
    labels[rng.random(dims) < 0.2] = IGNORE_LABEL
    terms = scan_loss.scan_loss_terms(g, labels)
    dev = max(abs(float(terms[a].data) - float(scan_loss_oracle(g, labels, a))) for a in AXES)
    return dev, {"logits": g.tolist(), "labels": labels.tolist()}


def _fusion_trial(rng):
    dims = _dims(rng, (4, 4, 3))
    C = int(rng.integers(1, 9))
    fs = [rng.normal(0.0, 1.0, size=dims + (C,)) for _ in range(3)]
    p = FusionParams(rng.normal(0.0, 1.5, size=(3 * C, 3)), rng.normal(0.0, 1.0, size=3))
    out, w = fuse_tri_features(*fs, p, return_weights=True)
    out, w = out.data, w.data
    w_ref, out_ref = fusion_oracle(*fs, p.weight, p.bias)
    stack = np.stack(fs)
    dev = max(
        float(np.max(np.abs(w.sum(axis=-1) - 1.0))),
        float(np.max(np.abs(w - w_ref))),
        float(np.max(np.abs(out - out_ref))),
        float(np.max(np.maximum(out - stack.max(axis=0), stack.min(axis=0) - out))),
        0.0,
    )
    return dev, {"features": [f.tolist() for f in fs], "weight": p.weight.tolist(),
                 "bias": p.bias.tolist()}


_RUNNERS = {"masks": _masks_trial, "cumavg": _cumavg_trial, "scanloss": _scanloss_trial,
            "fusion": _fusion_trial}


def run_trial(suite, seed, trial) -> Trial:
    if suite not in _RUNNERS:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    dev, inputs = _RUNNERS[suite](np.random.default_rng([seed, trial]))
    return Trial(suite, seed, trial, dev, inputs)


def worker_count() -> int:
    try:
        n = int(os.environ.get("SCANSSC_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def run_suite(suite, trials, seed=0, workers=None) -> list[Trial]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    workers = workers or worker_count()
    if workers == 1:
        return [run_trial(suite, seed, t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: run_trial(suite, seed, t), range(trials)))


def worst(results: list[Trial]) -> Trial:
    return max(results, key=lambda t: (t.deviation, -t.trial))


def dump_repro(trial: Trial, path, tolerance):
    doc = {"suite": trial.suite, "seed": trial.seed, "trial": trial.trial,
           "deviation": trial.deviation, "tolerance": tolerance, "inputs": trial.inputs}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def replay(path) -> Trial:
    with open(path) as fh:
        doc = json.load(fh)
    return run_trial(doc["suite"], doc["seed"], doc["trial"])
