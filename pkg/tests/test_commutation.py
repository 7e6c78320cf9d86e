"""Tests for scheme planning, generators, and the commutation experiment."""

import numpy as np
import pytest

from slelab.commutation import (
    EpsilonTooLarge,
    apply_generator,
    arctan_sum,
    commutation_experiment,
    commutator_residual,
    plan_schemes,
    run_scheme,
)
from slelab.core import Params, RngSpec, validate_config
from slelab.partition import PartitionSpec

CFG = validate_config((0.0, 1.0))
PARAMS = Params("backward", 4.0, 2)
SPEC = PartitionSpec("backward", 4.0, 2)


def test_plan_schemes_symmetric_budget():
    plan = plan_schemes(CFG, 0, 1, 0.01, 1.0)
    np.testing.assert_allclose(plan.eps, 0.0096, rtol=1e-14)
    np.testing.assert_allclose(plan.eps_prime, 0.0096, rtol=1e-14)


def test_plan_schemes_asymmetric_budget():
    plan = plan_schemes(CFG, 0, 1, 0.01, 2.0)
    np.testing.assert_allclose(plan.eps, 0.0192, rtol=1e-14)
    np.testing.assert_allclose(plan.eps_prime, 0.0092, rtol=1e-14)


def test_plan_schemes_zero_budget():
    plan = plan_schemes(CFG, 0, 1, 0.0, 1.0)
    assert plan.eps == 0.0 and plan.eps_prime == 0.0


def test_plan_schemes_epsilon_too_large():
    with pytest.raises(EpsilonTooLarge):
        plan_schemes(CFG, 0, 1, 0.3, 1.0)


def test_plan_schemes_role_swap_symmetry():
    """Swapping (i,j) with c -> 1/c and eps_tilde -> c*eps_tilde exchanges
    the two corrected leg times."""
    a = plan_schemes(CFG, 0, 1, 0.01, 2.0)
    b = plan_schemes(CFG, 1, 0, 0.02, 0.5)
    np.testing.assert_allclose(a.eps, b.eps_prime, rtol=1e-14)
    np.testing.assert_allclose(a.eps_prime, b.eps, rtol=1e-14)


def test_apply_generator_constant():
    assert apply_generator(SPEC, lambda x: 1.0, CFG, 0) == 0.0


def test_apply_generator_drift_term():
    got = apply_generator(SPEC, lambda x: float(x[0]), CFG, 0)
    np.testing.assert_allclose(got, 2.0, rtol=0, atol=1e-8)


def test_apply_generator_transport_term():
    got = apply_generator(SPEC, lambda x: float(x[1]), CFG, 0)
    np.testing.assert_allclose(got, -2.0, rtol=0, atol=1e-8)


def test_commutator_residual_product_drifts():
    phi = lambda x: float(x[0] * x[1])
    assert commutator_residual(SPEC, phi, CFG, 0, 1, 1e-3) < 1e-4


def test_commutator_residual_zero_drift_control():
    phi = lambda x: float(x[0] * x[1])
    res = commutator_residual(SPEC, phi, CFG, 0, 1, 1e-3,
                              drift_fn=lambda x, k: 0.0)
    assert res > 0.1


def test_commutator_residual_constant_phi():
    assert commutator_residual(SPEC, lambda x: 1.0, CFG, 0, 1, 1e-3) == 0.0


def test_commutator_residual_sweep():
    phi = lambda x: float(np.sin(x).sum())
    for mode in ("backward", "forward"):
        for kappa in (2.0, 4.0, 6.0):
            for pts in ((0.0, 1.0), (0.0, 1.0, 3.0)):
                spec = PartitionSpec(mode, kappa, len(pts))
                cfg = validate_config(pts)
                assert commutator_residual(spec, phi, cfg, 0, 1) < 1e-4


def test_arctan_sum_default_observable():
    np.testing.assert_allclose(arctan_sum(np.array([[0.0, 1.0]])),
                               [np.pi / 4], rtol=1e-14)


def test_run_scheme_deterministic_drifted_flows_commute():
    """With noise off and the drift kept, the corrected leg times make the
    two orderings agree up to the O(dt) integrator error."""
    plan = plan_schemes(CFG, 0, 1, 0.01, 2.0)
    diffs = []
    for dt in (1e-4, 1e-5):
        o1 = run_scheme("scheme1", plan, PARAMS, SPEC, CFG, dt, RngSpec(0, 0),
                        noise=False, drifted=True)
        o2 = run_scheme("scheme2", plan, PARAMS, SPEC, CFG, dt, RngSpec(0, 0),
                        noise=False, drifted=True)
        diffs.append(np.abs(o1.final_config.as_array()
                            - o2.final_config.as_array()).max())
    assert diffs[0] < 1e-6
    assert diffs[1] < diffs[0] / 5.0  # first-order in dt


def test_run_scheme_zero_drift_breaks_commutation():
    """Dropping the drift violates the commutation identity; the residual
    is dt-independent and far above the drifted case."""
    plan = plan_schemes(CFG, 0, 1, 0.01, 1.0)
    vals = []
    for dt in (1e-4, 1e-5):
        o1 = run_scheme("scheme1", plan, PARAMS, SPEC, CFG, dt, RngSpec(0, 0),
                        noise=False, drifted=False)
        o2 = run_scheme("scheme2", plan, PARAMS, SPEC, CFG, dt, RngSpec(0, 0),
                        noise=False, drifted=False)
        vals.append(np.abs(o1.final_config.as_array()
                           - o2.final_config.as_array()).max())
    assert vals[0] > 1e-3
    np.testing.assert_allclose(vals[0], vals[1], rtol=1e-3)


def test_run_scheme_repeatable():
    plan = plan_schemes(CFG, 0, 1, 0.01, 2.0)
    a = run_scheme("scheme1", plan, PARAMS, SPEC, CFG, 1e-4, RngSpec(3, 7))
    b = run_scheme("scheme1", plan, PARAMS, SPEC, CFG, 1e-4, RngSpec(3, 7))
    np.testing.assert_array_equal(a.final_config.as_array(),
                                  b.final_config.as_array())
    assert a.observables == b.observables


def test_run_scheme_rejects_unknown_order():
    plan = plan_schemes(CFG, 0, 1, 0.01, 1.0)
    with pytest.raises(ValueError):
        run_scheme("scheme3", plan, PARAMS, SPEC, CFG, 1e-4, RngSpec(0, 0))


def test_commutation_experiment_small():
    reports = commutation_experiment(PARAMS, SPEC, CFG, 0, 1, 0.02, 1.0,
                                     1e-4, 2000, seed=0)
    names = [r.name for r in reports]
    assert names == ["scheme_diff_x_0", "scheme_diff_x_1", "scheme_diff_phi"]
    for r in reports:
        assert r.passed, r


def test_commutation_experiment_seed_consistency():
    a = commutation_experiment(PARAMS, SPEC, CFG, 0, 1, 0.005, 1.0,
                               1e-4, 2000, seed=0)
    b = commutation_experiment(PARAMS, SPEC, CFG, 0, 1, 0.005, 1.0,
                               1e-4, 2000, seed=1)
    for ra, rb in zip(a, b):
        assert np.isfinite(ra.estimate) and np.isfinite(rb.estimate)
        # independent seeds agree within combined tolerances
        assert abs(ra.estimate - rb.estimate) < ra.tolerance + rb.tolerance


def test_commutation_experiment_worker_invariance():
    a = commutation_experiment(PARAMS, SPEC, CFG, 0, 1, 0.01, 2.0,
                               1e-4, 1000, seed=2)
    b = commutation_experiment(PARAMS, SPEC, CFG, 0, 1, 0.01, 2.0,
                               1e-4, 1000, seed=2, n_workers=2)
    for ra, rb in zip(a, b):
        assert ra.estimate == rb.estimate
        assert ra.reference == rb.reference
