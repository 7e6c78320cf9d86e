"""Tests for configurations, driving paths, and the RNG plumbing."""

import numpy as np
import pytest

from slelab.core import (
    DuplicatePoint,
    McReport,
    RngSpec,
    build_driving_path,
    make_report,
    normal_block,
    sample_increments,
    standard_normals,
    transform_config,
    validate_config,
)


def test_validate_config_accepts_distinct():
    cfg = validate_config((0.0, 1.0, 3.0))
    assert cfg.points == (0.0, 1.0, 3.0)
    assert len(cfg) == 3
    np.testing.assert_array_equal(cfg.as_array(), [0.0, 1.0, 3.0])


def test_validate_config_rejects_diagonal():
    with pytest.raises(DuplicatePoint) as exc:
        validate_config((0.0, 0.0))
    # indices reported 1-based
    assert "1" in str(exc.value) and "2" in str(exc.value)


def test_validate_config_negative_and_float():
    cfg = validate_config((-1.0, 2.5))
    assert cfg.points == (-1.0, 2.5)


def test_validate_config_near_duplicates_rejected():
    with pytest.raises(DuplicatePoint):
        validate_config((0.0, 1.0, 1.0))


def test_transform_config_shift():
    cfg = validate_config((0.0, 1.0))
    out = transform_config(cfg, 2.0, 1.0)
    assert out.points == (2.0, 3.0)


def test_transform_config_scale():
    cfg = validate_config((0.0, 1.0))
    out = transform_config(cfg, 0.0, 3.0)
    assert out.points == (0.0, 3.0)


def test_transform_config_composite():
    cfg = validate_config((0.0, 1.0, 3.0))
    out = transform_config(cfg, -1.0, 2.0)
    assert out.points == (-1.0, 1.0, 5.0)


def test_transform_config_rejects_nonpositive_scale():
    cfg = validate_config((0.0, 1.0))
    with pytest.raises(ValueError):
        transform_config(cfg, 0.0, 0.0)
    with pytest.raises(ValueError):
        transform_config(cfg, 0.0, -2.0)


def test_sample_increments_mean():
    """Mean of 10^6 unit-dt increments within the 3/sqrt(n) LLN band."""
    inc = sample_increments(RngSpec(0, 0), 1.0, 1_000_000)
    assert abs(inc.mean()) < 3e-3


def test_sample_increments_variance():
    inc = sample_increments(RngSpec(1, 0), 0.01, 1_000_000)
    assert abs(inc.var() / 0.01 - 1.0) < 0.05


def test_sample_increments_deterministic():
    a = sample_increments(RngSpec(7, 0), 0.5, 64)
    b = sample_increments(RngSpec(7, 0), 0.5, 64)
    np.testing.assert_array_equal(a, b)


def test_sample_increments_paths_decorrelated():
    n = 100_000
    a = standard_normals(RngSpec(3, 0), n)
    b = standard_normals(RngSpec(3, 1), n)
    corr = float(np.mean(a * b))
    assert abs(corr) < 3.0 / np.sqrt(n)


def test_standard_normals_moments():
    x = standard_normals(RngSpec(11, 5), 200_000)
    assert abs(x.mean()) < 3.0 / np.sqrt(x.size)
    assert abs(x.var() - 1.0) < 0.02


def test_normal_block_matches_per_path_streams():
    block = normal_block(9, 0, 4, 32)
    for p in range(4):
        np.testing.assert_array_equal(block[p], standard_normals(RngSpec(9, p), 32))


def test_normal_block_chunking_invariance():
    """Splitting the block over first_path offsets changes nothing."""
    whole = normal_block(5, 0, 10, 16)
    parts = np.vstack([normal_block(5, 0, 3, 16), normal_block(5, 3, 7, 16)])
    np.testing.assert_array_equal(whole, parts)


def test_build_driving_path_scaling():
    inc = sample_increments(RngSpec(7, 0), 0.01, 5)
    path = build_driving_path(4.0, 1.0, inc, 0.01)
    assert path.n_steps == 5
    assert path.dt == 0.01
    np.testing.assert_allclose(path.values[0], 1.0)
    np.testing.assert_allclose(path.values[1:], 1.0 + 2.0 * np.cumsum(inc),
                               rtol=0, atol=1e-14)


def test_build_driving_path_drift_term():
    inc = np.zeros(4)
    path = build_driving_path(4.0, 0.0, inc, 0.1, drifts=np.full(4, 3.0))
    np.testing.assert_allclose(path.values, [0.0, 0.3, 0.6, 0.9, 1.2],
                               rtol=0, atol=1e-14)


def test_make_report_pass_rule():
    r = make_report("x", 1.0, 0.1, 1.5, 0.5, 10)
    assert isinstance(r, McReport)
    assert r.passed  # boundary inclusive
    assert not make_report("x", 1.0, 0.1, 1.6, 0.5, 10).passed
    assert make_report("x", 0.0, 0.0, 0.0, 0.0, 1).passed
