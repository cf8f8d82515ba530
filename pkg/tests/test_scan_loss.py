import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanssc import autodiff as ad
from scanssc.oracles import cumavg_oracle, scan_loss_oracle
from scanssc.scan_loss import (
    cumulative_average,
    cumulative_average_depth,
    cumulative_average_height,
    cumulative_average_width,
    cumulative_targets,
    scan_ce,
    scan_loss_terms,
    scan_loss_total,
    window_plan,
)
from scanssc.voxel import AXES, IGNORE_LABEL, ConfigError

dims_st = st.tuples(st.integers(1, 5), st.integers(1, 6), st.integers(1, 4), st.integers(1, 4))


def slices(axis, values, P=2):
    """Grid whose slices along ``axis`` are the scalars in ``values``."""
    a = AXES.index(axis)
    shape = [1, 1, 1, P]
    shape[a] = len(values)
    v = np.asarray(values, dtype=float).reshape([-1 if i == a else 1 for i in range(3)] + [1])
    return np.broadcast_to(v, shape).copy()


def along(axis, grid):
    a = AXES.index(axis)
    return np.moveaxis(grid, a, 0)[:, 0, 0, 0].tolist()


def test_depth_two_slices():
    A, B = 1.0, 5.0
    assert along("dep", cumulative_average_depth(slices("dep", [A, B])).data) == [(A + B) / 2, B]


def test_width_four_slices():
    A, B, C, D = 1.0, 2.0, 7.0, 11.0
    out = along("wid", cumulative_average_width(slices("wid", [A, B, C, D])).data)
    assert out == [A, (A + B) / 2, (C + D) / 2, D]


def test_width_odd_three_slices():
    A, B, C = 1.0, 2.0, 7.0
    assert along("wid", cumulative_average_width(slices("wid", [A, B, C])).data) == [A, (B + C) / 2, C]


def test_height_prefix_means():
    out = along("hgt", cumulative_average_height(slices("hgt", [2.0, 4.0, 9.0])).data)
    np.testing.assert_allclose(out, [2.0, 3.0, 5.0])


def test_height_single_slice_is_identity(rng):
    g = rng.normal(size=(3, 2, 1, 4))
    np.testing.assert_array_equal(cumulative_average_height(g).data, g)


@pytest.mark.parametrize("axis", AXES)
def test_matches_brute_force(rng, axis):
    g = rng.normal(size=(4, 3, 2, 5))
    np.testing.assert_allclose(cumulative_average(g, axis).data, cumavg_oracle(g, axis), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(dims=dims_st, axis=st.sampled_from(AXES), alpha=st.floats(-3, 3), beta=st.floats(-3, 3))
def test_linearity_and_constants(dims, axis, alpha, beta):
    rng = np.random.default_rng(sum(dims))
    A, B = rng.normal(size=dims), rng.normal(size=dims)
    op = lambda x: cumulative_average(x, axis).data
    np.testing.assert_allclose(op(alpha * A + beta * B), alpha * op(A) + beta * op(B), atol=1e-12)
    c = np.full(dims, 0.37)
    np.testing.assert_allclose(op(c), c, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(dims=dims_st)
def test_boundary_slices_are_raw(dims):
    g = np.random.default_rng(sum(dims)).normal(size=dims)
    np.testing.assert_array_equal(cumulative_average(g, "dep").data[-1], g[-1])
    np.testing.assert_allclose(cumulative_average(g, "dep").data[0], g.mean(axis=0), atol=1e-12)
    w = cumulative_average(g, "wid").data
    np.testing.assert_array_equal(w[:, -1], g[:, -1])
    if dims[1] > 1:
        np.testing.assert_array_equal(w[:, 0], g[:, 0])
    np.testing.assert_array_equal(cumulative_average(g, "hgt").data[:, :, 0], g[:, :, 0])


# targets ---------------------------------------------------------------------

def test_targets_uniform_class():
    t = cumulative_targets(np.full((2, 3, 2), 3), "wid", 5)
    np.testing.assert_array_equal(t.distributions, np.broadcast_to(np.eye(5)[3], (2, 3, 2, 5)))


def test_targets_two_voxel_depth():
    t = cumulative_targets(np.array([1, 2]).reshape(2, 1, 1), "dep", 4)
    np.testing.assert_allclose(t.distributions[0, 0, 0], [0, 0.5, 0.5, 0])
    np.testing.assert_allclose(t.distributions[1, 0, 0], [0, 0, 1, 0])


def test_targets_ignored_back_voxel():
    t = cumulative_targets(np.array([1, IGNORE_LABEL]).reshape(2, 1, 1), "dep", 4)
    assert t.valid_mass[1, 0, 0] == 0 and not t.valid[1, 0, 0]
    np.testing.assert_allclose(t.distributions[0, 0, 0], [0, 1, 0, 0])
    np.testing.assert_array_equal(t.distributions[1, 0, 0], 0)


@settings(max_examples=30, deadline=None)
@given(dims=st.tuples(st.integers(1, 5), st.integers(1, 6), st.integers(1, 4)),
       axis=st.sampled_from(AXES), flipped=st.booleans())
def test_target_distributions_normalised(dims, axis, flipped):
    rng = np.random.default_rng(sum(dims))
    labels = rng.integers(0, 4, size=dims)
    labels[rng.random(dims) < 0.3] = IGNORE_LABEL
    t = cumulative_targets(labels, axis, 4, flipped=flipped)
    assert np.all(t.distributions >= 0)
    np.testing.assert_allclose(t.distributions.sum(-1)[t.valid], 1.0, atol=1e-9)
    assert np.all(t.distributions[~t.valid] == 0)


# cross-entropy ---------------------------------------------------------------

def test_uniform_target_gives_log_p():
    P = 4
    labels = np.arange(P).reshape(P, 1, 1)
    g = np.full((P, 1, 1, P), 0.3)
    loss = scan_ce(cumulative_average_depth(g), cumulative_targets(labels, "dep", P))
    # constant logits give log P against any target distribution
    assert float(loss.data) == pytest.approx(math.log(P), abs=1e-12)


def test_confident_logits_drive_loss_to_zero():
    labels = np.array([[[2]]])
    g = np.zeros((1, 1, 1, 3))
    g[..., 2] = 50.0
    assert float(scan_loss_total(g, labels).data) < 1e-20


def test_no_valid_positions_warns():
    labels = np.full((2, 2, 1), IGNORE_LABEL)
    with pytest.warns(RuntimeWarning, match="no valid"):
        loss = scan_ce(np.zeros((2, 2, 1, 3)), cumulative_targets(labels, "hgt", 3))
    assert float(loss.data) == 0.0


def test_shape_mismatch():
    with pytest.raises(ConfigError):
        scan_loss_terms(np.zeros((2, 2, 2, 3)), np.zeros((2, 2, 1), dtype=int))


def test_single_voxel_terms_equal_ce(rng):
    g = rng.normal(size=(1, 1, 1, 5))
    labels = np.array([[[3]]])
    ce = -(g[0, 0, 0, 3] - np.log(np.exp(g).sum()))
    terms = scan_loss_terms(g, labels)
    for t in terms.values():
        assert float(t.data) == pytest.approx(ce, abs=1e-12)
    assert float(scan_loss_total(g, labels).data) == pytest.approx(3 * ce, abs=1e-12)


def test_single_axis_and_sum_of_terms(rng):
    g = rng.normal(size=(4, 4, 2, 5))
    labels = rng.integers(0, 5, size=(4, 4, 2))
    terms = scan_loss_terms(g, labels)
    total = float(scan_loss_total(g, labels).data)
    assert total == pytest.approx(sum(float(t.data) for t in terms.values()), abs=1e-12)
    only = scan_loss_total(g, labels, axes=("wid",))
    assert float(only.data) == float(terms["wid"].data)


@pytest.mark.parametrize("axis", AXES)
def test_matches_scalar_oracle(rng, axis):
    g = rng.normal(0, 2, size=(4, 4, 2, 5))
    labels = rng.integers(0, 5, size=(4, 4, 2))
    labels[0, 1, 1] = labels[3, 2, 0] = IGNORE_LABEL
    got = float(scan_loss_terms(g, labels, axes=(axis,))[axis].data)
    assert got == pytest.approx(scan_loss_oracle(g, labels, axis), abs=1e-10)


@pytest.mark.parametrize("axis", AXES)
@pytest.mark.parametrize("shape", [(4, 4, 2), (5, 3, 3)])
def test_flip_covariance(rng, axis, shape):
    a = AXES.index(axis)
    g = rng.normal(size=shape + (4,))
    labels = rng.integers(0, 4, size=shape)
    labels[rng.random(shape) < 0.2] = IGNORE_LABEL
    base = float(scan_loss_terms(g, labels, axes=(axis,))[axis].data)
    flipped = scan_loss_terms(np.flip(g, a), np.flip(labels, a), axes=(axis,), flips=(axis,))
    assert float(flipped[axis].data) == pytest.approx(base, abs=1e-12)


def test_window_plans():
    assert window_plan("dep", 4) == [(0, 4, "suffix")]
    assert window_plan("wid", 5) == [(0, 2, "prefix"), (2, 5, "suffix")]
    assert window_plan("wid", 5, flipped=True) == [(0, 3, "prefix"), (3, 5, "suffix")]
    assert window_plan("wid", 5, flipped=True, flip_mode="reverse") == [(0, 2, "suffix"), (2, 5, "prefix")]
    assert window_plan("wid", 1) == [(0, 1, "suffix")]
    with pytest.raises(ConfigError):
        window_plan("hgt", 3, flipped=True, flip_mode="sideways")


def test_gradient(rng):
    g = rng.normal(size=(3, 4, 2, 4))
    labels = rng.integers(0, 4, size=(3, 4, 2))
    labels[1, 1, 0] = IGNORE_LABEL
    assert ad.grad_check(lambda t: scan_loss_total(t, labels), [g]) < 1e-4


def test_all_ignored_warns_once_per_term():
    labels = np.full((2, 2, 2), IGNORE_LABEL)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        assert float(scan_loss_total(np.zeros((2, 2, 2, 3)), labels).data) == 0.0
    assert len(rec) == 3
