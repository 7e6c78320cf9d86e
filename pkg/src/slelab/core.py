"""Shared domain types, configuration-space operations and reproducible RNG.

Random numbers
--------------
Every Monte Carlo path owns an independent counter-based stream: a Philox
bit generator whose 128-bit key packs the run seed in the high 64 bits and
the path index in the low 64 bits.  Gaussian variates use the inverse-CDF
method (fixed, documented choice): draw a uniform 53-bit integer k and map

    z = ndtri((k + 0.5) * 2**-53)

so the uniform argument is strictly inside (0, 1) and the stream for a
given (seed, path_index) is bit-for-bit reproducible regardless of how
paths are batched or parallelized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

BACKWARD = "backward"
FORWARD = "forward"
MODES = (BACKWARD, FORWARD)

_MASK64 = (1 << 64) - 1


class DuplicatePoint(ValueError):
    """Two marked points coincide (violates the distinctness requirement)."""

    def __init__(self, i: int, j: int, value: float):
        self.i, self.j, self.value = i, j, value
        super().__init__(f"points {i} and {j} coincide (x = {value!r})")


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


@dataclass(frozen=True)
class Params:
    """Fixed scalars of an experiment: flow direction, kappa, point count,
    optional coupling constant (gamma for the backward coupling, chi for the
    forward one) and the sign sequence used by the coupling checks."""

    mode: str
    kappa: float
    n_points: int
    gamma: float | None = None
    chi: float | None = None
    epsilon_signs: tuple[int, ...] | None = None

    def __post_init__(self):
        _check_mode(self.mode)
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.n_points < 1:
            raise ValueError("n_points must be a positive integer")
        # gamma > 2 is allowed: gamma and 4/gamma parameterize the same
        # coupling charge, and checks are run in both forms
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.epsilon_signs is not None:
            signs = tuple(int(s) for s in self.epsilon_signs)
            if len(signs) != self.n_points or any(s not in (-1, 1) for s in signs):
                raise ValueError("epsilon_signs must be +/-1 of length n_points")
            object.__setattr__(self, "epsilon_signs", signs)


@dataclass(frozen=True)
class PointConfig:
    """Ordered tuple of pairwise-distinct boundary points (kept in user
    order; nothing downstream depends on sortedness)."""

    points: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)


def validate_config(points: Sequence[float]) -> PointConfig:
    """Build a PointConfig, rejecting exactly the diagonal.

    Raises DuplicatePoint with 1-based indices of the first coinciding pair.
    """
    pts = tuple(float(x) for x in points)
    if not pts:
        raise ValueError("need at least one point")
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if pts[a] == pts[b]:
                raise DuplicatePoint(a + 1, b + 1, pts[a])
    return PointConfig(pts)


def transform_config(cfg: PointConfig, a: float, lam: float) -> PointConfig:
    """Apply x -> lam*x + a to every point (lam > 0 keeps distinctness)."""
    if not lam > 0:
        raise ValueError(f"scale must be positive, got {lam}")
    return PointConfig(tuple(lam * x + a for x in cfg.points))


@dataclass(frozen=True)
class DrivingPath:
    """Realized driving function on a uniform grid.

    values[k+1] = values[k] + sqrt(kappa)*increments[k] + drift[k]*dt, with
    values[0] the seed point.  increments are the raw Brownian increments
    (variance dt each), not yet scaled by sqrt(kappa).
    """

    dt: float
    n_steps: int
    increments: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if len(self.values) != self.n_steps + 1:
            raise ValueError("values must have length n_steps + 1")
        if len(self.increments) != self.n_steps:
            raise ValueError("increments must have length n_steps")


def build_driving_path(
    kappa: float,
    w0: float,
    increments: np.ndarray,
    dt: float,
    drifts: np.ndarray | None = None,
) -> DrivingPath:
    """Assemble a DrivingPath from Brownian increments and optional per-step
    drifts (drift is in value units per unit time)."""
    increments = np.asarray(increments, dtype=float)
    n = len(increments)
    steps = np.sqrt(kappa) * increments
    if drifts is not None:
        steps = steps + np.asarray(drifts, dtype=float) * dt
    values = np.empty(n + 1)
    values[0] = w0
    np.cumsum(steps, out=values[1:])
    values[1:] += w0
    return DrivingPath(dt=dt, n_steps=n, increments=increments, values=values)


@dataclass(frozen=True)
class RngSpec:
    """Key of one reproducible stream: (seed, path_index)."""

    seed: int
    path_index: int = 0


def _philox(seed: int, path_index: int) -> Generator:
    key = ((seed & _MASK64) << 64) | (path_index & _MASK64)
    return Generator(Philox(key=key))


def standard_normals(rng: RngSpec, n: int) -> np.ndarray:
    """n standard normals from the stream keyed by (seed, path_index)."""
    g = _philox(rng.seed, rng.path_index)
    k = g.integers(0, 1 << 53, size=n, dtype=np.uint64)
    return ndtri((k.astype(np.float64) + 0.5) * 2.0**-53)


def sample_increments(rng: RngSpec, dt: float, n_steps: int) -> np.ndarray:
    """n_steps Brownian increments, each N(0, dt), deterministic in rng."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    return np.sqrt(dt) * standard_normals(rng, n_steps)


def normal_block(seed: int, first_path: int, n_paths: int, n_steps: int) -> np.ndarray:
    """(n_paths, n_steps) standard normals; row p is exactly the stream of
    RngSpec(seed, first_path + p), so batching never changes results."""
    k = np.empty((n_paths, n_steps), dtype=np.uint64)
    for p in range(n_paths):
        g = _philox(seed, first_path + p)
        k[p] = g.integers(0, 1 << 53, size=n_steps, dtype=np.uint64)
    return ndtri((k.astype(np.float64) + 0.5) * 2.0**-53)


@dataclass(frozen=True)
class McReport:
    """Universal output record of a statistical check.

    `passed` implements the contract pass = (|estimate - reference| <=
    tolerance); it is serialized under the column name "pass" (a Python
    keyword, hence the attribute spelling).
    """

    name: str
    estimate: float
    std_error: float
    reference: float
    tolerance: float
    n_samples: int
    passed: bool = field(default=False)


def make_report(
    name: str,
    estimate: float,
    std_error: float,
    reference: float,
    tolerance: float,
    n_samples: int,
) -> McReport:
    ok = abs(estimate - reference) <= tolerance
    return McReport(name, float(estimate), float(std_error), float(reference),
                    float(tolerance), int(n_samples), bool(ok))
