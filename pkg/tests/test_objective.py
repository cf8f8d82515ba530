import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanssc import autodiff as ad
from scanssc.objective import (
    REPORT_KEYS,
    LossReport,
    LossWeights,
    ce_loss,
    scal_losses,
    total_loss,
)
from scanssc.voxel import IGNORE_LABEL, ConfigError


def random_case(rng, shape=(3, 3, 2), P=5, ignore=0.15):
    g = rng.normal(0, 2, size=shape + (P,))
    labels = rng.integers(0, P, size=shape)
    labels[rng.random(shape) < ignore] = IGNORE_LABEL
    return g, labels


def ce_oracle(g, labels, w=None):
    total, n = 0.0, 0
    for idx in np.ndindex(labels.shape):
        y = labels[idx]
        if y == IGNORE_LABEL:
            continue
        v = g[idx]
        lse = max(v) + math.log(sum(math.exp(t - max(v)) for t in v))
        total += (1.0 if w is None else w[y]) * (lse - v[y])
        n += 1
    return total / n


def scal_oracle(g, labels):
    """Voxel-by-voxel precision / recall / specificity sums."""
    idxs = [i for i in np.ndindex(labels.shape) if labels[i] != IGNORE_LABEL]
    probs = {}
    for i in idxs:
        e = [math.exp(t) for t in g[i]]
        probs[i] = [v / sum(e) for v in e]

    def terms(p_of, is_pos):
        tp = sum(p_of(i) for i in idxs if is_pos(i))
        npos = sum(1 for i in idxs if is_pos(i))
        nneg = len(idxs) - npos
        out = []
        if npos:
            out.append(-math.log(tp / sum(p_of(i) for i in idxs)))
            out.append(-math.log(tp / npos))
        if nneg:
            out.append(-math.log(sum(1 - p_of(i) for i in idxs if not is_pos(i)) / nneg))
        return out

    geo = sum(terms(lambda i: 1 - probs[i][0], lambda i: labels[i] != 0))
    present = sorted({int(labels[i]) for i in idxs})
    sem = sum(sum(terms(lambda i, c=c: probs[i][c], lambda i, c=c: labels[i] == c)) for c in present)
    return geo, sem / len(present)


# cross-entropy -----------------------------------------------------------------

def test_ce_uniform_is_log_p():
    labels = np.array([[[0, 3], [2, 1]]])
    assert float(ce_loss(np.zeros((1, 2, 2, 4)), labels).data) == pytest.approx(math.log(4), abs=1e-14)


def test_ce_peaked_goes_to_zero():
    labels = np.array([[[0, 2]]])
    g = np.zeros((1, 1, 2, 3))
    g[0, 0, 0, 0] = g[0, 0, 1, 2] = 60.0
    assert float(ce_loss(g, labels).data) < 1e-20


def test_ce_matches_oracle(rng):
    g, labels = random_case(rng)
    assert float(ce_loss(g, labels).data) == pytest.approx(ce_oracle(g, labels), abs=1e-10)
    w = rng.uniform(0.5, 2, 5)
    assert float(ce_loss(g, labels, w).data) == pytest.approx(ce_oracle(g, labels, w), abs=1e-10)


def test_ce_no_labels_warns():
    with pytest.warns(RuntimeWarning):
        assert float(ce_loss(np.zeros((1, 1, 2, 3)), np.full((1, 1, 2), IGNORE_LABEL)).data) == 0.0


def test_ce_shape_mismatch():
    with pytest.raises(ConfigError):
        ce_loss(np.zeros((1, 1, 2, 3)), np.zeros((1, 2, 1), dtype=int))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), step=st.floats(0.01, 2.0))
def test_ce_monotone_toward_true_class(seed, step):
    rng = np.random.default_rng(seed)
    g, labels = random_case(rng, (2, 2, 2), 4, ignore=0.0)
    push = np.zeros_like(g)
    np.put_along_axis(push, labels[..., None], step, axis=-1)
    assert float(ce_loss(g + push, labels).data) <= float(ce_loss(g, labels).data) + 1e-15


# affinity losses -------------------------------------------------------------

def test_scal_matches_oracle(rng):
    for _ in range(5):
        g, labels = random_case(rng, (2, 2, 2), 4, ignore=0.1)
        geo, sem = scal_losses(g, labels)
        og, osem = scal_oracle(g, labels)
        assert float(geo.data) == pytest.approx(og, abs=1e-8)
        assert float(sem.data) == pytest.approx(osem, abs=1e-8)


def test_scal_perfect_predictions():
    labels = np.array([[[0, 1], [2, 1]], [[2, 0], [1, 1]]])
    g = np.eye(3)[labels] * 80.0
    geo, sem = scal_losses(g, labels)
    assert float(geo.data) < 1e-12 and float(sem.data) < 1e-12


def test_geo_zero_for_empty_scene():
    labels = np.zeros((2, 2, 1), dtype=int)
    g = np.zeros((2, 2, 1, 3))
    g[..., 0] = 80.0
    geo, _ = scal_losses(g, labels)
    assert float(geo.data) < 1e-12


# total -----------------------------------------------------------------------

def test_report_additivity(rng):
    g, labels = random_case(rng, (3, 4, 2))
    w = LossWeights(lambda_d=0.01, lambda_scan=0.7)
    total, r = total_loss(g, labels, weights=w, depth_term=2.5)
    hand = r.ce + r.scal_geo + r.scal_sem + w.lambda_d * r.depth + w.lambda_scan * (
        r.scan_dep + r.scan_wid + r.scan_hgt)
    assert r.total == pytest.approx(hand, abs=1e-12)
    assert float(total.data) == r.total


def test_zero_scan_weight_is_baseline(rng):
    g, labels = random_case(rng)
    _, r = total_loss(g, labels, weights=LossWeights(lambda_scan=0.0))
    base = float(ce_loss(g, labels).data) + sum(float(t.data) for t in scal_losses(g, labels))
    assert r.total == pytest.approx(base, abs=1e-12)


def test_disabled_scan_axes_report_zero(rng):
    g, labels = random_case(rng)
    _, r = total_loss(g, labels, scan_axes=("hgt",))
    assert r.scan_dep == 0.0 and r.scan_wid == 0.0 and r.scan_hgt > 0.0


def test_default_weights():
    w = LossWeights()
    assert (w.lambda_d, w.lambda_scan) == (0.001, 1.0)
    with pytest.raises(ConfigError):
        LossWeights(lambda_scan=-1.0)


def test_report_json_round_trip(rng):
    _, r = total_loss(*random_case(rng))
    doc = json.loads(r.to_json())
    assert tuple(doc) == REPORT_KEYS
    assert LossReport.from_json(r.to_json()) == r


def test_total_gradient(rng):
    g, labels = random_case(rng, (3, 4, 2), 5)
    assert ad.grad_check(lambda t: total_loss(t, labels)[0], [g]) < 1e-3
