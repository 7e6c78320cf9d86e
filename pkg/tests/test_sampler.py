"""Tests for path sampling, weights, and the measure-equality checks."""

import numpy as np
import pytest

from slelab.core import Params, RngSpec, validate_config
from slelab.partition import PartitionSpec
from slelab.sampler import (
    companion_observable,
    drift_s,
    girsanov_check,
    inverse_law_check,
    martingale_check,
    run_leg,
    simulate_ith_sle,
    step_sizes,
)

CFG2 = validate_config((0.0, 1.0))
P_BACK = Params("backward", 4.0, 2)
SPEC_BACK = PartitionSpec("backward", 4.0, 2)


def test_step_sizes_remainder():
    np.testing.assert_allclose(step_sizes(0.1, 0.03), [0.03, 0.03, 0.03, 0.01])
    np.testing.assert_allclose(step_sizes(0.09, 0.03), [0.03, 0.03, 0.03])
    np.testing.assert_allclose(step_sizes(0.01, 0.03), [0.01])
    assert step_sizes(0.1, 1e-3).sum() == pytest.approx(0.1, rel=1e-12)


def test_drift_s_examples():
    np.testing.assert_allclose(drift_s(SPEC_BACK, CFG2, 0), 1.0, rtol=1e-14)
    np.testing.assert_allclose(
        drift_s(PartitionSpec("forward", 4.0, 2), CFG2, 0), -1.0, rtol=1e-14)
    np.testing.assert_allclose(
        drift_s(PartitionSpec("backward", 4.0, 1), validate_config((0.0,)), 0),
        0.0, rtol=0, atol=0)


def test_drift_s_kappa_free_combination():
    """sqrt(kappa) * s is the same -2 sum 1/(x_i-x_l) for every kappa."""
    cfg = validate_config((0.0, 1.0, 3.0))
    vals = [np.sqrt(k) * drift_s(PartitionSpec("backward", k, 3), cfg, 1)
            for k in (2.0, 4.0, 6.0)]
    np.testing.assert_allclose(vals, vals[0], rtol=1e-13)


def test_run_leg_deterministic_single_step():
    """Zero noise, no drift: companion moves by the exact slit map."""
    x = np.array([[0.0, 1.0]])
    res = run_leg("backward", 4.0, -0.5, -1.25, x, 0,
                  np.zeros((1, 1)), np.array([0.01]),
                  drifted=False, collision_guard=2.0)
    np.testing.assert_allclose(res.x[0, 1], np.sqrt(0.96), rtol=1e-14)
    np.testing.assert_allclose(res.derivs[0, 1], 1.0 / np.sqrt(0.96), rtol=1e-14)
    assert res.active[0]


def test_run_leg_substep_semigroup():
    x = np.array([[0.0, 1.0]])
    one = run_leg("backward", 4.0, -0.5, -1.25, x, 0,
                  np.zeros((1, 1)), np.array([0.01]),
                  drifted=False, collision_guard=2.0)
    two = run_leg("backward", 4.0, -0.5, -1.25, x, 0,
                  np.zeros((1, 2)), np.array([0.005, 0.005]),
                  drifted=False, collision_guard=2.0)
    np.testing.assert_allclose(one.x, two.x, rtol=0, atol=1e-14)


def test_simulate_snapshot_at_time_zero():
    samp = simulate_ith_sle(P_BACK, SPEC_BACK, CFG2, 0, 0.05, 1e-3,
                            RngSpec(0, 0), "base_P")
    assert samp.weight_trace[0] == 1.0
    assert samp.path.values[0] == 0.0
    # states track the companions of the driven point
    np.testing.assert_array_equal(samp.states[0].marked_values, [1.0])
    assert samp.stopped_at is None
    assert len(samp.states) == len(samp.path.values)


def test_simulate_deterministic_in_seed():
    a = simulate_ith_sle(P_BACK, SPEC_BACK, CFG2, 0, 0.02, 1e-3,
                         RngSpec(5, 9), "reweighted_P")
    b = simulate_ith_sle(P_BACK, SPEC_BACK, CFG2, 0, 0.02, 1e-3,
                         RngSpec(5, 9), "reweighted_P")
    np.testing.assert_array_equal(a.path.values, b.path.values)
    np.testing.assert_array_equal(a.weight_trace, b.weight_trace)


def test_simulate_drifted_measure_has_unit_weights():
    samp = simulate_ith_sle(P_BACK, SPEC_BACK, CFG2, 0, 0.05, 1e-3,
                            RngSpec(0, 4), "drifted_Q")
    np.testing.assert_array_equal(np.unique(samp.weight_trace), [1.0])


def test_simulate_weights_positive():
    samp = simulate_ith_sle(P_BACK, SPEC_BACK, CFG2, 0, 0.05, 1e-3,
                            RngSpec(2, 1), "reweighted_P")
    assert np.all(np.asarray(samp.weight_trace) > 0)


def test_martingale_mean_weight():
    r = martingale_check(P_BACK, SPEC_BACK, CFG2, 0, 0.1, 1e-3, 4000, seed=0)
    assert r.reference == 1.0
    assert r.passed
    assert abs(r.estimate - 1.0) <= 3 * r.std_error


def test_martingale_across_kappas():
    for kappa, pts in ((2.0, (0.0, 1.0)), (6.0, (0.0, 1.0, 3.0))):
        n = len(pts)
        r = martingale_check(Params("backward", kappa, n),
                             PartitionSpec("backward", kappa, n),
                             validate_config(pts), 0, 0.05, 1e-3, 2000, seed=1)
        assert r.passed, r


def test_martingale_worker_count_does_not_change_results():
    a = martingale_check(P_BACK, SPEC_BACK, CFG2, 0, 0.05, 1e-3, 1500, seed=0)
    b = martingale_check(P_BACK, SPEC_BACK, CFG2, 0, 0.05, 1e-3, 1500, seed=0,
                         n_workers=3)
    assert a.estimate == b.estimate
    assert a.std_error == b.std_error


def test_martingale_stopped_immediately_is_exact():
    """Paths frozen at once keep M = M_0, so the mean is exactly one."""
    tight = validate_config((0.0, 0.02))
    r = martingale_check(P_BACK, SPEC_BACK, tight, 0, 0.1, 1e-3, 200, seed=0)
    assert r.estimate == 1.0
    assert r.std_error == 0.0


def test_girsanov_default_observable():
    r = girsanov_check(P_BACK, SPEC_BACK, CFG2, 0, None, 0.05, 1e-3, 4000, seed=1)
    assert r.passed
    assert abs(r.estimate - r.reference) <= r.tolerance


def test_girsanov_constant_observable_is_exact():
    one = lambda arr: np.ones(arr.shape[0])
    r = girsanov_check(P_BACK, SPEC_BACK, CFG2, 0, one, 0.05, 1e-3, 500, seed=3)
    assert abs(r.estimate - r.reference) < 1e-12


def test_girsanov_early_stopping_bound():
    """bound_n = 0.5 * M_0 stops every path at the first step; equality
    must survive optional stopping."""
    r = girsanov_check(P_BACK, SPEC_BACK, CFG2, 0, None, 0.05, 1e-3, 500,
                       bound_n=0.5, seed=1)
    assert r.passed
    assert abs(r.estimate - r.reference) <= 3 * max(r.std_error, 1e-300)


def test_companion_observable_slices():
    obs = companion_observable(0, 2)
    np.testing.assert_array_equal(obs(np.array([[0.0, 1.0], [2.0, 5.0]])),
                                  [1.0, 5.0])
    obs13 = companion_observable(1, 3, j=2)
    np.testing.assert_array_equal(obs13(np.array([[0.0, 1.0, 3.0]])), [3.0])


def test_inverse_law_check():
    reports = inverse_law_check(2.0, 2j, 0.1, 1e-3, 4000, seed=0)
    names = {r.name for r in reports}
    assert {"inverse_mean_real", "inverse_mean_imag"} <= names
    for r in reports:
        assert r.passed, r


def test_inverse_law_rejects_degenerate_horizon():
    with pytest.raises(ValueError):
        inverse_law_check(2.0, 2j, 0.0, 1e-3, 10, seed=0)


def test_inverse_law_rejects_lower_half_plane_start():
    with pytest.raises(ValueError):
        inverse_law_check(2.0, 1.0 - 1j, 0.1, 1e-3, 10, seed=0)


def test_inverse_law_rejects_ragged_grid():
    # time reversal needs a uniform grid
    with pytest.raises(ValueError):
        inverse_law_check(2.0, 2j, 0.1, 0.03, 10, seed=0)
