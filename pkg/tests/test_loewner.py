"""Tests for the slit-map substeps and the chain evolution."""

import numpy as np
import pytest

from slelab.core import RngSpec, build_driving_path, sample_increments
from slelab.loewner import (
    ProbeTooClose,
    Swallowed,
    SwallowedReference,
    evolve,
    extract_hcap,
    initial_state,
    reference_map_zero_driving,
    sqrt_him,
    substep_backward,
    substep_forward,
)

SQRT5 = np.sqrt(5.0)


def zero_path(n_steps, dt, w0=0.0):
    return build_driving_path(4.0, w0, np.zeros(n_steps), dt)


def test_sqrt_him_branch():
    assert sqrt_him(-4.0) == 2j
    assert sqrt_him(4.0) == 2 + 0j
    np.testing.assert_allclose(sqrt_him(2j), 1 + 1j, rtol=0, atol=1e-15)
    # branch stays in the closed upper half plane
    for z in (-1 - 0.01j + 0j, 3 + 2j, -5 + 0.3j):
        assert complex(sqrt_him(z * z)).imag >= 0 or z.imag < 0


def test_substep_backward_real():
    res = substep_backward(3.0, 0.0, 1.0)
    np.testing.assert_allclose(res.new_value, SQRT5, rtol=0, atol=1e-12)
    # deriv multiplier w0 / w_delta
    np.testing.assert_allclose(res.new_deriv, 3.0 / SQRT5, rtol=0, atol=1e-12)
    assert not res.swallowed


def test_substep_backward_complex():
    res = substep_backward(1j, 0.0, 1.0)
    np.testing.assert_allclose(res.new_value, SQRT5 * 1j, rtol=0, atol=1e-12)
    assert not res.swallowed


def test_substep_backward_swallows_real():
    with pytest.raises(Swallowed):
        substep_backward(0.1, 0.0, 1.0)


def test_substep_backward_boundary_case():
    # gap^2 == 4 delta sits on the swallowed side
    with pytest.raises(Swallowed):
        substep_backward(2.0, 0.0, 1.0)


def test_substep_forward_complex():
    res = substep_forward(3j, 0.0, 1.0)
    np.testing.assert_allclose(res.new_value, SQRT5 * 1j, rtol=0, atol=1e-12)
    assert not res.swallowed


def test_substep_forward_real():
    res = substep_forward(1.0, 0.0, 1.0)
    np.testing.assert_allclose(res.new_value, SQRT5, rtol=0, atol=1e-12)
    np.testing.assert_allclose(res.new_deriv, 1.0 / SQRT5, rtol=0, atol=1e-12)
    assert not res.swallowed


def test_substep_forward_flags_absorbed_bulk():
    """w=i is absorbed at t=1/4 < 1; image lands on the real axis."""
    res = substep_forward(1j, 0.0, 1.0)
    assert res.swallowed
    np.testing.assert_allclose(complex(res.new_value).real, np.sqrt(3.0),
                               rtol=0, atol=1e-12)


def test_substep_deriv_chains():
    first = substep_backward(3.0, 0.0, 1.0, deriv=1.0)
    second = substep_backward(3.0, 0.0, 1.0, deriv=2.5)
    np.testing.assert_allclose(second.new_deriv, 2.5 * first.new_deriv,
                               rtol=1e-14, atol=0)


def test_substep_shift_covariance():
    """Shifting w and U0 together shifts the image and keeps the deriv."""
    a = substep_backward(3.0, 0.0, 1.0)
    b = substep_backward(4.5, 1.5, 1.0)
    np.testing.assert_allclose(b.new_value - 1.5, a.new_value, rtol=0, atol=1e-12)
    np.testing.assert_allclose(b.new_deriv, a.new_deriv, rtol=0, atol=1e-12)


def test_evolve_zero_driving_bulk():
    st = initial_state("backward", bulk=(1 + 1j,))
    out = evolve(st, zero_path(25, 0.01))
    np.testing.assert_allclose(out.bulk_values[0], 0.78615 + 1.27202j,
                               rtol=0, atol=1e-5)
    ref = reference_map_zero_driving(1 + 1j, 0.25, "backward")
    np.testing.assert_allclose(out.bulk_values[0], ref, rtol=0, atol=1e-10)


def test_evolve_zero_driving_marked():
    out = evolve(initial_state("backward", marked=(3.0,)), zero_path(100, 0.01))
    np.testing.assert_allclose(out.marked_values[0], SQRT5, rtol=0, atol=1e-10)
    np.testing.assert_allclose(out.marked_derivs[0], 3.0 / SQRT5, rtol=0, atol=1e-10)


def test_evolve_zero_steps_identity():
    st = initial_state("forward", marked=(2.0,), bulk=(1j,))
    out = evolve(st, zero_path(0, 0.01))
    assert out.time == st.time
    np.testing.assert_array_equal(out.marked_values, st.marked_values)
    np.testing.assert_array_equal(out.bulk_values, st.bulk_values)


def test_evolve_matches_reference_grid():
    """Zero driving agrees with the closed form in both modes."""
    zs = [0.5 + 0.5j, -1 + 2j, 3 + 0.25j, 2j]
    for mode, T in (("backward", 0.3), ("forward", 0.04)):
        st = initial_state(mode, bulk=tuple(zs))
        out = evolve(st, zero_path(int(round(T / 1e-3)), 1e-3))
        for k, z in enumerate(zs):
            ref = reference_map_zero_driving(z, T, mode)
            np.testing.assert_allclose(out.bulk_values[k], ref, rtol=0, atol=1e-10)


def test_evolve_semigroup_constant_driving():
    """Substeps are exact maps, so splitting a constant leg changes nothing."""
    st = initial_state("backward", marked=(1.3,), bulk=(0.4 + 0.7j,))
    one = evolve(st, zero_path(1, 0.1, w0=0.25))
    half = zero_path(1, 0.05, w0=0.25)
    two = evolve(evolve(st, half), half)
    np.testing.assert_allclose(one.marked_values, two.marked_values,
                               rtol=0, atol=1e-12)
    np.testing.assert_allclose(one.bulk_values, two.bulk_values,
                               rtol=0, atol=1e-12)
    np.testing.assert_allclose(one.bulk_derivs, two.bulk_derivs,
                               rtol=0, atol=1e-12)


def test_evolve_deriv_against_finite_difference():
    h = 1e-6
    z = 0.8 + 1.1j
    inc = sample_increments(RngSpec(2, 0), 1e-3, 200)
    path = build_driving_path(4.0, 0.0, inc, 1e-3)
    st = initial_state("backward", bulk=(z, z + h))
    out = evolve(st, path)
    fd = (out.bulk_values[1] - out.bulk_values[0]) / h
    np.testing.assert_allclose(out.bulk_derivs[0], fd, rtol=1e-5, atol=0)


def test_evolve_backward_im_nondecreasing():
    inc = sample_increments(RngSpec(4, 1), 1e-3, 1)
    st = initial_state("backward", bulk=(0.3 + 0.4j,))
    ims = [st.bulk_values[0].imag]
    for k in range(60):
        inc = sample_increments(RngSpec(4, 1), 1e-3, 60)
        st = evolve(st, build_driving_path(4.0, 0.0, inc[k:k + 1], 1e-3))
        ims.append(st.bulk_values[0].imag)
    assert all(b >= a for a, b in zip(ims, ims[1:]))


def test_evolve_swallows_backward_marked():
    with pytest.raises(Swallowed) as exc:
        evolve(initial_state("backward", marked=(0.05,)), zero_path(100, 0.01))
    assert exc.value.step == 0
    np.testing.assert_allclose(exc.value.time, 0.05**2 / 4.0, rtol=1e-12)


def test_evolve_swallows_forward_bulk():
    with pytest.raises(Swallowed) as exc:
        evolve(initial_state("forward", bulk=(0.1j,)), zero_path(100, 0.01))
    np.testing.assert_allclose(exc.value.time, 0.1**2 / 4.0, rtol=1e-12)


def test_initial_state_rejects_bad_mode():
    with pytest.raises(ValueError):
        initial_state("sideways")


def test_hcap_backward():
    R = 1e4
    st = initial_state("backward", bulk=(1j * R, 2j * R))
    out = evolve(st, zero_path(50, 0.01))
    np.testing.assert_allclose(extract_hcap(out, R), 1.0, rtol=0, atol=1e-5)


def test_hcap_time_zero():
    R = 1e4
    st = initial_state("backward", bulk=(1j * R, 2j * R))
    assert extract_hcap(st, R) == 0.0


def test_hcap_forward():
    R = 1e4
    st = initial_state("forward", bulk=(1j * R, 2j * R))
    out = evolve(st, zero_path(100, 0.01))
    np.testing.assert_allclose(extract_hcap(out, R), 2.0, rtol=0, atol=1e-5)


def test_hcap_independent_of_driving():
    """hcap(K_t) = 2t whatever the driver does."""
    R = 1e4
    T, dt = 0.2, 1e-3
    inc = sample_increments(RngSpec(13, 2), dt, int(T / dt))
    path = build_driving_path(6.0, 0.0, inc, dt)
    st = initial_state("backward", bulk=(1j * R, 2j * R))
    out = evolve(st, path)
    np.testing.assert_allclose(extract_hcap(out, R), 2 * T, rtol=0, atol=1e-5)
    np.testing.assert_allclose(out.hcap_accum, 2 * T, rtol=1e-12)


def test_hcap_probe_too_close():
    r = 1.5
    st = initial_state("backward", bulk=(1j * r, 2j * r))
    out = evolve(st, zero_path(50, 0.01))
    with pytest.raises(ProbeTooClose):
        extract_hcap(out, r)


def test_hcap_requires_tracked_probes():
    out = evolve(initial_state("backward", bulk=(1 + 1j,)), zero_path(10, 0.01))
    with pytest.raises(ValueError):
        extract_hcap(out)


def test_reference_map_examples():
    np.testing.assert_allclose(reference_map_zero_driving(3j, 1.0, "forward"),
                               SQRT5 * 1j, rtol=0, atol=1e-12)
    np.testing.assert_allclose(reference_map_zero_driving(1j, 1.0, "backward"),
                               SQRT5 * 1j, rtol=0, atol=1e-12)
    for mode in ("backward", "forward"):
        np.testing.assert_allclose(reference_map_zero_driving(0.7 + 0.2j, 0.0, mode),
                                   0.7 + 0.2j, rtol=0, atol=1e-15)


def test_reference_map_real_axis_signs():
    # real inputs keep their side of the driver
    out = reference_map_zero_driving(-3.0, 1.0, "backward")
    np.testing.assert_allclose(out, -SQRT5, rtol=0, atol=1e-12)


def test_reference_map_swallowed():
    # backward attracts the real axis: x**2 - 4t hits zero at t = x**2/4
    with pytest.raises(SwallowedReference):
        reference_map_zero_driving(1.0, 1.0, "backward")
    with pytest.raises(SwallowedReference):
        reference_map_zero_driving(1j, 1.0, "forward")
