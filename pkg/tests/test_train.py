import numpy as np
import pytest

from scanssc.config import RunConfig
from scanssc.synth import PRESETS, corridor, generate
from scanssc.train import (
    GRADCHECK_CONFIG,
    DivergenceError,
    build_masks,
    init_model,
    kink_distance,
    run_gradcheck,
    smooth_base_point,
    train,
)
from scanssc.voxel import ConfigError

TINY = RunConfig(target_dims=(4, 4, 2), proposal_dims=(4, 4, 2), channels=4, num_classes=5, steps=3)


def labels_for(cfg, seed=0):
    return np.random.default_rng(seed).integers(0, cfg.num_classes, size=cfg.target_dims)


def test_same_seed_same_run():
    y = labels_for(TINY)
    a, b = train(TINY, y), train(TINY, y)
    assert [r for _, r in a.history] == [r for _, r in b.history]
    assert np.array_equal(a.logits, b.logits)


def test_zero_steps_records_initial_state():
    res = train(TINY.replace(steps=0), labels_for(TINY))
    assert [s for s, _ in res.history] == [0]
    assert res.initial_metrics == res.final_metrics


def test_history_covers_every_step_and_loss_drops():
    res = train(TINY.replace(steps=10), labels_for(TINY))
    assert [s for s, _ in res.history] == list(range(11))
    assert res.history[-1][1].total < res.history[0][1].total


def test_scan_weight_changes_trajectory():
    y = labels_for(TINY)
    a = train(TINY, y)
    b = train(TINY.replace(lambda_scan=0.0), y)
    assert a.history[0][1].total != b.history[0][1].total
    assert b.history[-1][1].total == pytest.approx(
        b.history[-1][1].ce + b.history[-1][1].scal_geo + b.history[-1][1].scal_sem, abs=1e-12)


def test_divergence_is_reported():
    with pytest.raises(DivergenceError) as exc, np.errstate(all="ignore"):
        train(TINY.replace(lr=1e12, steps=20), labels_for(TINY))
    assert exc.value.step >= 1


def test_label_checks():
    with pytest.raises(ConfigError):
        train(TINY, np.zeros((4, 4, 3), dtype=int))
    with pytest.raises(ConfigError):
        train(TINY, np.full(TINY.target_dims, 7))


def test_upsampling_config_runs():
    cfg = TINY.replace(target_dims=(8, 8, 2), steps=1)
    res = train(cfg, labels_for(cfg))
    assert res.logits.shape == (8, 8, 2, 5)


def test_smooth_base_point_clears_kinks():
    f, p = smooth_base_point(GRADCHECK_CONFIG)
    assert kink_distance(GRADCHECK_CONFIG, f, p, build_masks(GRADCHECK_CONFIG)) >= 1e-4


def test_gradcheck_small_modules():
    errs = run_gradcheck(modules=("scan-loss", "objective"))
    assert set(errs) == {"scan-loss:logits", "objective:logits", "objective:scal"}
    assert max(errs.values()) < 1e-3


def test_gradcheck_rejects_large_configs():
    with pytest.raises(ConfigError):
        run_gradcheck(RunConfig())
    with pytest.raises(ConfigError):
        run_gradcheck(modules=("optimizer",))


@pytest.mark.parametrize("preset", PRESETS)
def test_synth_deterministic(preset):
    a = generate(preset, (8, 8, 4), seed=3)
    assert np.array_equal(a, generate(preset, (8, 8, 4), seed=3))
    assert a.min() >= 0 and a.max() < 20


def test_corridor_structure():
    g = corridor((16, 16, 4), seed=0)
    assert (g[:, :, 0] != 0).all()
    occupied = (g != 0).sum(axis=(0, 1))
    assert all(occupied[i] >= occupied[i + 1] for i in range(3))
    with pytest.raises(ConfigError):
        generate("mountains", (4, 4, 4))


def test_train_gradients_flow_to_features():
    cfg = TINY.replace(steps=1)
    res = train(cfg, labels_for(cfg))
    f0, _ = init_model(cfg)
    assert not np.array_equal(res.features, f0)
