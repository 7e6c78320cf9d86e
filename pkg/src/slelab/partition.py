"""Product-form partition functions and finite-difference residuals.

The backward flow pairs with Z = prod |x_i - x_j|**(-2/kappa) and conformal
weight h = -(kappa+6)/(2*kappa); the forward flow flips both signs of the
story: Z = prod |x_i - x_j|**(+2/kappa), h = (6-kappa)/(2*kappa).

Only product forms are constructed here, but the residual evaluators accept
any user-supplied function handle, so deliberately wrong exponents can be
run through the same code as negative controls.

All indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import BACKWARD, PointConfig, _check_mode


class StepTooLarge(ValueError):
    """Finite-difference step too large for the closest pair of points."""


@dataclass(frozen=True)
class PartitionSpec:
    """Mode/kappa plus the derived exponents (filled automatically)."""

    mode: str
    kappa: float
    n_points: int
    h_weight: float = field(init=False)
    exponent: float = field(init=False)
    homogeneity_degree: float = field(init=False)

    def __post_init__(self):
        _check_mode(self.mode)
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        object.__setattr__(self, "h_weight", h_kappa(self.mode, self.kappa))
        expo = (-2.0 if self.mode == BACKWARD else 2.0) / self.kappa
        object.__setattr__(self, "exponent", expo)
        n = self.n_points
        object.__setattr__(self, "homogeneity_degree", expo * n * (n - 1) / 2.0)


def h_kappa(mode: str, kappa: float) -> float:
    """Conformal weight: -(kappa+6)/(2 kappa) backward, (6-kappa)/(2 kappa)
    forward."""
    _check_mode(mode)
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if mode == BACKWARD:
        return -(kappa + 6.0) / (2.0 * kappa)
    return (6.0 - kappa) / (2.0 * kappa)


def log_z_cols(exponent: float, x: np.ndarray) -> np.ndarray:
    """log Z along the last axis: exponent * sum_{i<j} log|x_i - x_j|.

    x has shape (..., N); returns shape (...).  Coinciding pairs give -inf
    (backward) which downstream code treats as a collision.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 2:
        return np.zeros(x.shape[:-1])
    iu, ju = np.triu_indices(n, k=1)
    gaps = np.abs(x[..., iu] - x[..., ju])
    with np.errstate(divide="ignore"):
        return exponent * np.sum(np.log(gaps), axis=-1)


def grad_log_z_cols(exponent: float, x: np.ndarray, i: int) -> np.ndarray:
    """d(log Z)/dx_i along the last axis: exponent * sum_{j != i} 1/(x_i-x_j)."""
    x = np.asarray(x, dtype=float)
    d = x[..., i, None] - np.delete(x, i, axis=-1)
    return exponent * np.sum(1.0 / d, axis=-1)


def _check_index(cfg: PointConfig, i: int) -> None:
    if not 0 <= i < len(cfg):
        raise IndexError(f"index {i} out of range for {len(cfg)} points")


def z_value(spec: PartitionSpec, cfg: PointConfig) -> float:
    """prod_{i<j} |x_i - x_j|**exponent, evaluated in log space."""
    return float(np.exp(log_z_cols(spec.exponent, cfg.as_array())))


def grad_log_z(spec: PartitionSpec, cfg: PointConfig, i: int) -> float:
    """Closed-form d(log Z)/dx_i; the drift is b_i = kappa * grad_log_z."""
    _check_index(cfg, i)
    return float(grad_log_z_cols(spec.exponent, cfg.as_array(), i))


def min_gap(cfg: PointConfig) -> float:
    x = cfg.as_array()
    n = len(x)
    if n < 2:
        return np.inf
    iu, ju = np.triu_indices(n, k=1)
    return float(np.min(np.abs(x[iu] - x[ju])))


def product_z_fn(exponent: float) -> Callable[[np.ndarray], float]:
    """Function handle form of the product partition function (used both for
    the real thing and for wrong-exponent negative controls)."""

    def zfn(x: np.ndarray) -> float:
        return float(np.exp(log_z_cols(exponent, x)))

    return zfn


# 5-point central stencils (4th order).
def fd_second(f: Callable, x: np.ndarray, i: int, h: float) -> float:
    shift = np.zeros_like(x)
    shift[i] = h
    return (
        -f(x + 2 * shift) + 16 * f(x + shift) - 30 * f(x)
        + 16 * f(x - shift) - f(x - 2 * shift)
    ) / (12.0 * h * h)


def fd_first(f: Callable, x: np.ndarray, i: int, h: float) -> float:
    shift = np.zeros_like(x)
    shift[i] = h
    return (
        -f(x + 2 * shift) + 8 * f(x + shift) - 8 * f(x - shift) + f(x - 2 * shift)
    ) / (12.0 * h)


def _resolve_step(cfg: PointConfig, fd_step: float | None, default_frac: float) -> float:
    gap = min_gap(cfg)
    if fd_step is None:
        fd_step = default_frac * gap
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    if fd_step >= gap / 10.0:
        raise StepTooLarge(
            f"fd_step {fd_step:g} must stay below a tenth of the min gap {gap:g}"
        )
    return fd_step


def bpz_residual(
    spec: PartitionSpec,
    cfg: PointConfig,
    i: int,
    fd_step: float | None = None,
    z_fn: Callable[[np.ndarray], float] | None = None,
) -> float:
    """|D_i Z| / |Z| by central finite differences, where

        D_i = (kappa/2) d^2/dx_i^2 -+ 2 sum_{j != i} ( 1/(x_j-x_i) d/dx_j
                                                      - h/(x_j-x_i)^2 )

    (upper sign backward, lower forward).  Default fd_step is 1e-4 times the
    minimum pairwise gap; steps at or above a tenth of the gap are refused.
    """
    _check_index(cfg, i)
    h = _resolve_step(cfg, fd_step, 1e-4)
    f = z_fn if z_fn is not None else product_z_fn(spec.exponent)
    x = cfg.as_array()
    sgn = -1.0 if spec.mode == BACKWARD else 1.0
    z0 = f(x)
    acc = 0.5 * spec.kappa * fd_second(f, x, i, h)
    for j in range(len(x)):
        if j == i:
            continue
        gap = x[j] - x[i]
        acc += sgn * 2.0 * (fd_first(f, x, j, h) / gap - spec.h_weight * z0 / gap**2)
    return abs(acc) / abs(z0)


def kz_residual(spec: PartitionSpec, cfg: PointConfig, i: int,
                fd_step: float | None = None) -> float:
    """|FD d(log Z)/dx_i - closed form|; exact identity, FD truncation only."""
    _check_index(cfg, i)
    h = _resolve_step(cfg, fd_step, 1e-5)
    x = cfg.as_array()

    def logz(y: np.ndarray) -> float:
        return float(log_z_cols(spec.exponent, y))

    return abs(fd_first(logz, x, i, h) - grad_log_z(spec, cfg, i))
