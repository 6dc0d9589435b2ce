import csv
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xbarsim.crossbar import FAULT_HRS, FAULT_LRS, EngineConfig, map_layer, mapped_mvm
from xbarsim.device import DeviceParams
from xbarsim.errors import ConfigError
from xbarsim.nonideal import (NonIdealityConfig, apply_endurance, apply_nonidealities,
                              apply_retention, apply_saf, apply_states, apply_variability,
                              arrhenius_factor, contraction_exponent, default_endurance_rate)

DEV = DeviceParams.preset()
# total conductance of the composed snapshot in test_composition_order_golden
GOLDEN_SUM = 0.39603247212738224


@pytest.fixture(scope="module")
def layer():
    rng = np.random.default_rng(11)
    return map_layer(rng.normal(size=(40, 90)), DEV, EngineConfig(tile_shapes=(64,)),
                     calibration=rng.uniform(0, 1, size=(64, 90)), layer_id=3)


def _g(layer):
    return np.stack([layer.pos.g, layer.neg.g])


def test_neutral_settings_leave_layer_untouched(layer):
    out, mask = apply_nonidealities(layer, NonIdealityConfig(seed=9))
    assert out is layer
    assert mask.count(FAULT_LRS) == mask.count(FAULT_HRS) == 0
    x = np.random.default_rng(0).uniform(size=(5, 90))
    assert np.array_equal(mapped_mvm(out, x), mapped_mvm(layer, x))


@pytest.mark.parametrize("field,value", [("sigma", -1.0), ("states", 1), ("p_lrs", 1.2),
                                         ("p_hrs", -0.1), ("cycles", -5), ("temperature", 0.0),
                                         ("drift_nu", -0.1), ("drift_time", -1.0)])
def test_config_validation_names_field(field, value):
    with pytest.raises(ConfigError) as err:
        NonIdealityConfig(**{field: value})
    assert err.value.field == field


def test_probabilities_must_sum_to_at_most_one():
    with pytest.raises(ConfigError):
        NonIdealityConfig(p_lrs=0.6, p_hrs=0.6)


def test_variability_is_seeded(layer):
    a = apply_variability(layer, 100.0, seed=1)
    b = apply_variability(layer, 100.0, seed=1)
    c = apply_variability(layer, 100.0, seed=2)
    assert np.array_equal(_g(a), _g(b))
    assert not np.array_equal(_g(a), _g(c))
    assert apply_variability(layer, 0.0, seed=1) is layer


def test_variability_keeps_levels_and_perturbs_bounds(layer):
    out = apply_variability(layer, 100.0, seed=4)
    assert np.array_equal(out.pos.level, layer.pos.level)
    r_on = 1.0 / out.pos.g_hi
    assert abs(r_on.mean() - DEV.r_on) < 5 * 100.0 / np.sqrt(r_on.size)
    assert abs(r_on.std() - 100.0) < 10.0


def test_overlapping_distributions_still_order_bounds():
    # r_on and r_off one sigma apart: roughly a quarter of raw draws would cross
    rng = np.random.default_rng(0)
    lay = map_layer(rng.normal(size=(100, 100)), DEV, EngineConfig(tile_shapes=(128,)))
    out = apply_variability(lay, DEV.r_off - DEV.r_on, seed=5)
    for arr in (out.pos, out.neg):
        assert np.all(arr.g_hi > arr.g_lo) and np.all(arr.g_lo > 0)


def test_states_snap_levels(layer):
    out = apply_states(layer, 3)
    assert set(np.unique(out.pos.level)) <= {0.0, 0.5, 1.0}
    assert apply_states(layer, 0) is layer


def test_saf_examples(layer):
    same, mask = apply_saf(layer, 0.0, 0.0, seed=1)
    assert np.array_equal(_g(same), _g(layer)) and mask.count(FAULT_LRS) == 0
    stuck, mask = apply_saf(layer, 1.0, 0.0, seed=1)
    assert np.allclose(stuck.pos.g, DEV.g_on) and np.allclose(stuck.neg.g, DEV.g_on)
    assert mask.count(FAULT_LRS) == 2 * layer.pos.level.size


def test_saf_count_is_binomial():
    rng = np.random.default_rng(1)
    lay = map_layer(rng.normal(size=(100, 50)), DEV, EngineConfig(tile_shapes=(128,)))
    n = 2 * 100 * 50  # 10^4 cells over both arrays
    _, mask = apply_saf(lay, 0.05, 0.0, seed=8)
    mean, sd = n * 0.05, np.sqrt(n * 0.05 * 0.95)
    assert abs(mask.count(FAULT_LRS) - mean) <= 3 * sd


@given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0, 0.5))
def test_saf_masks_are_nested(p1, p2, p_hrs):
    lay = map_layer(np.random.default_rng(2).normal(size=(6, 9)), DEV)
    lo, hi = sorted((p1, p2))
    _, m_lo = apply_saf(lay, lo, 0.0, seed=3)
    _, m_hi = apply_saf(lay, hi, 0.0, seed=3)
    assert np.all((m_lo.pos == FAULT_LRS) <= (m_hi.pos == FAULT_LRS))
    _, both = apply_saf(lay, lo, p_hrs, seed=3)
    assert np.array_equal(both.pos == FAULT_LRS, m_lo.pos == FAULT_LRS)


def test_saf_rejects_impossible_probabilities(layer):
    with pytest.raises(ConfigError):
        apply_saf(layer, 0.7, 0.5, seed=0)


def test_fault_mask_csv(tmp_path, layer):
    _, mask = apply_saf(layer, 0.02, 0.02, seed=6)
    path = tmp_path / "faults.csv"
    mask.to_csv(layer, path)
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == ["tile_id", "row", "col", "fault"]
    assert len(rows) == mask.count(FAULT_LRS) + mask.count(FAULT_HRS)
    n = len(layer.placements)
    for r in rows:
        p = layer.placements[int(r["tile_id"]) % n]
        assert int(r["row"]) < p.occupied[0] and int(r["col"]) < p.occupied[1]
        assert r["fault"] in {"stuck_lrs", "stuck_hrs"}


def test_arrhenius_and_default_rate():
    assert arrhenius_factor(300.0) == 1.0
    assert arrhenius_factor(350.0) > 1.0
    rate = default_endurance_rate()
    assert contraction_exponent(1e4, 350.0, rate) == pytest.approx(0.5, rel=1e-12)


def test_endurance_examples(layer):
    assert apply_endurance(layer, 0, 350.0) is layer
    hot = apply_endurance(layer, 5000, 350.0)
    cool = apply_endurance(layer, 5000, 300.0)
    span = lambda l: np.log(l.pos.g_hi / l.pos.g_lo).mean()
    assert span(hot) < span(cool) < span(layer)
    # geometric mean is a fixed point of the contraction
    assert np.allclose(np.sqrt(hot.pos.g_hi * hot.pos.g_lo), np.sqrt(DEV.g_on * DEV.g_off))


def test_endurance_limit_collapses_differences(layer):
    worn = apply_endurance(layer, 10 ** 9, 350.0)
    g_m = np.sqrt(DEV.g_on * DEV.g_off)
    assert np.allclose(worn.pos.g, g_m) and np.allclose(worn.neg.g, g_m)
    assert np.allclose(worn.pos.g - worn.neg.g, 0.0, atol=1e-15)


def test_retention_examples(layer):
    assert apply_retention(layer, 0.1, 0.0, seed=1) is layer
    assert apply_retention(layer, 0.0, 1e4, seed=1) is layer
    aged = apply_retention(layer, 0.1, 1e4, seed=1)
    factor = aged.pos.drift
    assert np.mean(factor) == pytest.approx(10001 ** -0.1, rel=0.01)
    assert 10001 ** -0.1 == pytest.approx(0.398, abs=1e-3)
    assert np.all(aged.pos.g > 0)


def test_injectors_are_deterministic_and_order_free(layer):
    cfg = NonIdealityConfig(sigma=50.0, states=8, p_lrs=0.01, p_hrs=0.02, cycles=100,
                            temperature=330.0, drift_nu=0.05, drift_time=100.0, seed=12)
    a, ma = apply_nonidealities(layer, cfg)
    b, mb = apply_nonidealities(layer, cfg)
    assert np.array_equal(_g(a), _g(b)) and np.array_equal(ma.pos, mb.pos)
    # streams are keyed by layer id, not by call order
    other = replace(layer, layer_id=4)
    apply_nonidealities(other, cfg)
    c, _ = apply_nonidealities(layer, cfg)
    assert np.array_equal(_g(a), _g(c))
    assert np.all(_g(a) > 0)


def test_composition_order_golden(layer):
    """Manual chain in the documented order equals the combined injector."""
    cfg = NonIdealityConfig(sigma=80.0, states=4, p_lrs=0.03, p_hrs=0.03, cycles=2000,
                            temperature=340.0, drift_nu=0.1, drift_time=1e3, seed=21)
    step = apply_variability(layer, cfg.sigma, cfg.seed)
    step = apply_states(step, cfg.states)
    step, _ = apply_saf(step, cfg.p_lrs, cfg.p_hrs, cfg.seed)
    step = apply_endurance(step, cfg.cycles, cfg.temperature)
    step = apply_retention(step, cfg.drift_nu, cfg.drift_time, cfg.seed)
    combined, _ = apply_nonidealities(layer, cfg)
    assert np.array_equal(_g(step), _g(combined))
    # golden values pin the composed result
    assert _g(combined).sum() == pytest.approx(GOLDEN_SUM, rel=1e-12)

