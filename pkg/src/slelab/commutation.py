"""Two-scheme commutation experiment and infinitesimal generator checks.

Scheme 1 grows a hull at point i for time eps, then one at point j for time
eps_tilde; Scheme 2 grows at j for time eps_prime, then at i for c*eps_tilde.
The first-leg times are the first-order capacity-matching truncations

    eps       = (1 - 4*eps_tilde/(X_i-X_j)**2) * c * eps_tilde
    eps_prime = (1 - 4*c*eps_tilde/(X_j-X_i)**2) * eps_tilde

so scheme comparisons carry an o(eps_tilde**2) allowance on top of Monte
Carlo error.

The generator of the k-th flow acting on functions of the configuration is

    L_k = (kappa/2) d^2/dx_k^2 + b_k d/dx_k -+ sum_{l != k} 2/(x_l-x_k) d/dx_l

(transport sign - backward, + forward) with b_k = kappa * d(log Z)/dx_k.
Nested finite differences evaluate the commutator [L_i, L_j]; the outer
differences use a 10x larger step than the inner ones, which keeps the
rounding noise of the nested evaluation far below the truncation target.

All indices are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import McReport, Params, PointConfig, RngSpec, make_report, normal_block
from .partition import (PartitionSpec, StepTooLarge, fd_first, fd_second,
                        grad_log_z_cols, min_gap)
from .sampler import (REASON_SWALLOWED, _chunk_ranges, _sum_stats, map_chunks,
                      run_leg, step_sizes)
from .loewner import Swallowed
from .core import BACKWARD


class EpsilonTooLarge(ValueError):
    """eps_tilde too large for the gap: first-leg time would go nonpositive."""


@dataclass(frozen=True)
class SchemePlan:
    i: int
    j: int
    eps_tilde: float
    c: float
    eps: float
    eps_prime: float


@dataclass(frozen=True)
class SchemeOutcome:
    final_config: PointConfig
    observables: dict[str, float]


def plan_schemes(cfg: PointConfig, i: int, j: int, eps_tilde: float,
                 c: float) -> SchemePlan:
    """Fill the truncated first-leg times; refuses eps_tilde too large for
    the (i, j) gap."""
    if i == j:
        raise ValueError("i and j must differ")
    if eps_tilde < 0 or c <= 0:
        raise ValueError("eps_tilde must be >= 0 and c > 0")
    gap2 = (cfg.points[i] - cfg.points[j]) ** 2
    if 4.0 * max(1.0, c) * eps_tilde >= gap2:
        raise EpsilonTooLarge(
            f"4*max(1,c)*eps_tilde = {4 * max(1.0, c) * eps_tilde:g} "
            f"must stay below the squared gap {gap2:g}")
    eps = (1.0 - 4.0 * eps_tilde / gap2) * c * eps_tilde
    eps_prime = (1.0 - 4.0 * c * eps_tilde / gap2) * eps_tilde
    return SchemePlan(i, j, eps_tilde, c, eps, eps_prime)


def arctan_sum(x: np.ndarray) -> np.ndarray:
    """Default bounded test observable: sum_k arctan(x_k)."""
    return np.sum(np.arctan(x), axis=-1)


def _scheme_legs(order: str, plan: SchemePlan) -> list[tuple[int, float]]:
    if order == "scheme1":
        return [(plan.i, plan.eps), (plan.j, plan.eps_tilde)]
    if order == "scheme2":
        return [(plan.j, plan.eps_prime), (plan.i, plan.c * plan.eps_tilde)]
    raise ValueError("order must be 'scheme1' or 'scheme2'")


def run_scheme(
    order: str,
    plan: SchemePlan,
    params: Params,
    spec: PartitionSpec,
    cfg: PointConfig,
    dt: float,
    rng: RngSpec,
    noise: bool = True,
    drifted: bool = True,
    phi: Callable[[np.ndarray], np.ndarray] = arctan_sum,
) -> SchemeOutcome:
    """One realization of a scheme (two legs, fresh randomness per leg).

    noise=False / drifted=False give the deterministic harness mode where
    both legs reduce to pure companion slit flows.  Raises Swallowed if a
    companion is absorbed; callers discard and count such paths.
    """
    legs = _scheme_legs(order, plan)
    deltas = [step_sizes(T, dt) for _, T in legs]
    total = sum(d.size for d in deltas)
    normals = normal_block(rng.seed, rng.path_index, 1, total)
    if not noise:
        normals = np.zeros_like(normals)
    x = cfg.as_array()[None, :]
    used = 0
    active = None
    for (slot, _T), dl in zip(legs, deltas):
        # collision_guard=2 keeps only the exact swallow criterion
        # gap^2 <= 4*delta.  Scheme runs carry no weights, so the wider
        # layer is not needed, and discarding near-miss paths would
        # condition the two schemes on a trajectory event (minimum gap
        # over time) that is not determined by the final hull, biasing
        # the comparison.  Swallow events are final-hull-measurable and
        # therefore identical in law across schemes.
        res = run_leg(params.mode, params.kappa, spec.exponent, spec.h_weight,
                      x, slot, normals[:, used:used + dl.size], dl,
                      drifted=drifted, active=active, collision_guard=2.0)
        used += dl.size
        if not res.active[0]:
            raise Swallowed(f"companion swallowed in {order} leg at point {slot}",
                            step=int(res.stopped_step[0]))
        x, active = res.x, res.active
    final = PointConfig(tuple(float(v) for v in x[0]))
    obs = {f"x_{k}": float(x[0, k]) for k in range(x.shape[1])}
    obs["phi"] = float(phi(x[0]))
    return SchemeOutcome(final, obs)


def _scheme_chunk(task: dict) -> dict:
    plan = SchemePlan(*task["plan"])
    legs = _scheme_legs(task["order"], plan)
    deltas = [step_sizes(T, task["dt"]) for _, T in legs]
    total = sum(d.size for d in deltas)
    normals = normal_block(task["seed"], task["first_path"], task["count"], total)
    x = np.tile(np.asarray(task["points"]), (task["count"], 1))
    used = 0
    active = None
    reason = None
    for (slot, _T), dl in zip(legs, deltas):
        # guard=2 == exact swallow criterion; see run_scheme for why the
        # wider collision layer must not be used here
        res = run_leg(task["mode"], task["kappa"], task["exponent"],
                      task["h_weight"], x, slot,
                      normals[:, used:used + dl.size], dl,
                      drifted=True, active=active,
                      stopped_reason=reason, collision_guard=2.0)
        used += dl.size
        x, active, reason = res.x, res.active, res.stopped_reason
    keep = reason != REASON_SWALLOWED
    out = {"n": int(keep.sum()), "n_discarded": int((~keep).sum())}
    n_pts = x.shape[1]
    cols = {f"x_{k}": x[keep, k] for k in range(n_pts)}
    cols["phi"] = arctan_sum(x[keep])
    for name, v in cols.items():
        out[f"s_{name}"] = float(np.sum(v))
        out[f"s2_{name}"] = float(np.sum(v * v))
    return out


def _scheme_stats(order, plan, params, spec, cfg, dt, n_paths, seed,
                  first_path, n_workers) -> dict:
    tasks = [
        {"order": order,
         "plan": (plan.i, plan.j, plan.eps_tilde, plan.c, plan.eps,
                  plan.eps_prime),
         "mode": params.mode, "kappa": params.kappa,
         "exponent": spec.exponent, "h_weight": spec.h_weight,
         "points": tuple(cfg.points), "dt": dt, "seed": seed,
         "first_path": first_path + a, "count": cnt}
        for a, cnt in _chunk_ranges(n_paths)
    ]
    return _sum_stats(map_chunks(_scheme_chunk, tasks, n_workers))


def commutation_experiment(
    params: Params,
    spec: PartitionSpec,
    cfg: PointConfig,
    i: int,
    j: int,
    eps_tilde: float,
    c: float,
    dt: float,
    n_paths: int,
    seed: int = 0,
    n_workers: int = 1,
) -> list[McReport]:
    """Scheme 1 vs Scheme 2 Monte Carlo means, one report per observable
    (each final marked point and the arctan test function); tolerance
    max(3 * pooled SE, 10 * eps_tilde**2)."""
    plan = plan_schemes(cfg, i, j, eps_tilde, c)
    s1 = _scheme_stats("scheme1", plan, params, spec, cfg, dt, n_paths, seed,
                       0, n_workers)
    s2 = _scheme_stats("scheme2", plan, params, spec, cfg, dt, n_paths, seed,
                       n_paths, n_workers)
    names = [f"x_{k}" for k in range(len(cfg))] + ["phi"]
    reports = []
    for name in names:
        n1, n2 = s1["n"], s2["n"]
        m1 = s1[f"s_{name}"] / n1
        m2 = s2[f"s_{name}"] / n2
        v1 = max(s1[f"s2_{name}"] / n1 - m1 * m1, 0.0) * n1 / max(n1 - 1, 1)
        v2 = max(s2[f"s2_{name}"] / n2 - m2 * m2, 0.0) * n2 / max(n2 - 1, 1)
        pooled = math.sqrt(v1 / n1 + v2 / n2)
        tol = max(3.0 * pooled, 10.0 * eps_tilde**2)
        reports.append(make_report(f"scheme_diff_{name}", m1, pooled, m2, tol,
                                   n1 + n2))
    return reports


def _drift_b(spec: PartitionSpec, x: np.ndarray, k: int,
             drift_fn: Callable | None) -> float:
    if drift_fn is not None:
        return float(drift_fn(x, k))
    return float(spec.kappa * grad_log_z_cols(spec.exponent, x, k))


def _generator_value(spec: PartitionSpec, phi: Callable, x: np.ndarray,
                     k: int, h: float, drift_fn: Callable | None) -> float:
    """(L_k phi)(x) by 5-point central stencils."""
    sgn = -2.0 if spec.mode == BACKWARD else 2.0
    acc = 0.5 * spec.kappa * fd_second(phi, x, k, h)
    acc += _drift_b(spec, x, k, drift_fn) * fd_first(phi, x, k, h)
    for l in range(len(x)):
        if l == k:
            continue
        acc += sgn / (x[l] - x[k]) * fd_first(phi, x, l, h)
    return acc


def _check_step(cfg: PointConfig, fd_step: float | None, scale: float = 1.0,
                default_frac: float = 1e-4):
    gap = min_gap(cfg)
    if fd_step is None:
        fd_step = default_frac * gap
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    if scale * fd_step >= gap / 10.0:
        raise StepTooLarge(
            f"fd_step {fd_step:g} (x{scale:g} outer) too large for min gap {gap:g}")
    return fd_step


def apply_generator(
    spec: PartitionSpec,
    phi: Callable[[np.ndarray], float],
    cfg: PointConfig,
    k: int,
    fd_step: float | None = None,
    drift_fn: Callable | None = None,
) -> float:
    """(L_k phi) at cfg; drift_fn overrides the product-form drift (pass a
    zero function for drift-free negative controls)."""
    if not 0 <= k < len(cfg):
        raise IndexError(f"index {k} out of range")
    h = _check_step(cfg, fd_step)
    return _generator_value(spec, phi, cfg.as_array(), k, h, drift_fn)


def commutator_residual(
    spec: PartitionSpec,
    phi: Callable[[np.ndarray], float],
    cfg: PointConfig,
    i: int,
    j: int,
    fd_step: float | None = None,
    drift_fn: Callable | None = None,
) -> float:
    """|([L_i, L_j] -+ 4/(x_i-x_j)**2 (L_i - L_j)) phi| at cfg via nested
    finite differences (outer step = 10 * fd_step); the right-hand sign
    is - for backward generators and + for forward ones.

    Default inner step is 2e-3 * min gap, coarser than the single-level
    default: the outer second derivative divides the inner stencils'
    rounding noise (about eps/h^2) by (10h)^2, so tiny steps drown the
    identity in noise while h ~ eps^(1/6) balances noise against the
    O(h^4) truncation of both levels.
    """
    if i == j:
        raise ValueError("i and j must differ")
    h = _check_step(cfg, fd_step, scale=10.0, default_frac=2e-3)
    x = cfg.as_array()

    def L(k: int, g: Callable) -> Callable:
        return lambda y: _generator_value(spec, g, y, k, h, drift_fn)

    li_phi = L(i, phi)
    lj_phi = L(j, phi)
    outer = 10.0 * h
    lij = _generator_value(spec, lj_phi, x, i, outer, drift_fn)
    lji = _generator_value(spec, li_phi, x, j, outer, drift_fn)
    # forward generators flip every first-order coefficient, which flips
    # the sign of the right-hand side as well
    sgn = 1.0 if spec.mode == BACKWARD else -1.0
    rhs = sgn * 4.0 / (x[i] - x[j]) ** 2 * (li_phi(x) - lj_phi(x))
    return abs(lij - lji - rhs)
