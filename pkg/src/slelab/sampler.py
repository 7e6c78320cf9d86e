"""Stochastic driving: i-th SLE(kappa, b) simulation and measure changes.

The driving coordinate follows Euler-Maruyama steps (drift frozen at the
substep start) while companion points advance by exact slit-map substeps,
so the only time-discretization error lives in the driving SDE.

Weight process along a path, in log space:

    log M_t = h * sum_j log f'_t(X_j) + log Z(running configuration)

with the running configuration holding W_t in the driving slot.  M_0 is
Z(initial configuration) because all derivatives start at 1.  Paths stop at
the first substep boundary (after at least one completed substep) where
|M| exceeds bound_n, or when a companion is swallowed; stopped paths stay
frozen and are retained in Monte Carlo averages.

All indices are 0-based.  Paths are chunked for memory and optional
process-level parallelism; chunking never changes results because every
path owns the stream keyed by (seed, path_index).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (BACKWARD, DrivingPath, McReport, Params, PointConfig,
                   RngSpec, make_report, normal_block)
from .loewner import ChainState
from .partition import PartitionSpec, grad_log_z_cols, log_z_cols, z_value

MEASURE_BASE_P = "base_P"
MEASURE_DRIFTED_Q = "drifted_Q"
MEASURE_REWEIGHTED_P = "reweighted_P"
MEASURES = (MEASURE_BASE_P, MEASURE_DRIFTED_Q, MEASURE_REWEIGHTED_P)

REASON_NONE = 0
REASON_BOUND = 1
REASON_SWALLOWED = 2
REASON_NAMES = {REASON_BOUND: "bound_n", REASON_SWALLOWED: "swallowed"}

DERIV_CAP = 1e300
DEFAULT_CHUNK = 20_000

# Paths stop when a companion gap enters the collision layer
# gap^2 <= COLLISION_GUARD^2 * dt.  The slit substep itself only swallows at
# gap^2 <= 4 dt, but substeps taken inside the wider layer are where the
# frozen-driver splitting stops being a martingale step (per-step weight
# error ~ dt/gap^2 is O(1) there, independent of dt).  Stopping at the layer
# edge is a legitimate stopping time, so means of the stopped weight are
# preserved while the corrupted steps are never taken.  Guard 12 keeps the
# residual martingale bias ~3e-3 at dt=1e-3 (scaling like 1/guard^2).
COLLISION_GUARD = 12.0


class NumericalBlowup(RuntimeError):
    """A companion derivative left (0, 1e300)."""


class EffectiveSampleCollapse(RuntimeError):
    """Importance-weight effective sample size fell below 1% of n_paths."""


class SwallowedTooOften(RuntimeError):
    """More than 1% of inverse-construction paths failed."""


def drift_s(spec: PartitionSpec, current: PointConfig, i: int) -> float:
    """Girsanov exponent drift: sqrt(kappa) * d(log Z)/dx_i at the running
    configuration (W in slot i).  The SDE drift is b_i = sqrt(kappa) * s."""
    x = current.as_array()
    if len(x) < 2:
        return 0.0
    return float(np.sqrt(spec.kappa) * grad_log_z_cols(spec.exponent, x, i))


def step_sizes(T: float, dt: float) -> np.ndarray:
    """Uniform substeps of size dt, plus one shorter remainder step if T is
    not a multiple of dt."""
    if not T > 0 or not dt > 0:
        raise ValueError("T and dt must be positive")
    n_full = int(math.floor(T / dt + 1e-9))
    rem = T - n_full * dt
    out = np.full(n_full, dt)
    if rem > 1e-6 * dt:
        out = np.append(out, rem)
    if out.size == 0:
        raise ValueError("T shorter than one substep")
    return out


@dataclass
class LegResult:
    """Terminal arrays of one vectorized simulation leg (rows = paths)."""

    x: np.ndarray            # (n, N) full configuration, driver in its slot
    derivs: np.ndarray       # (n, N) companion derivatives (1 in driver slot)
    active: np.ndarray       # (n,) bool
    stopped_step: np.ndarray     # (n,) int, -1 if never stopped
    stopped_reason: np.ndarray   # (n,) int8, REASON_*
    log_m: np.ndarray | None     # (n,) log M at stop/terminal
    log_m0: np.ndarray | None    # (n,) log M at start of this leg
    trace: list | None           # optional per-substep snapshots


def run_leg(
    mode: str,
    kappa: float,
    exponent: float,
    h_weight: float,
    x: np.ndarray,
    slot: int,
    normals: np.ndarray,
    deltas: np.ndarray,
    drifted: bool,
    track_weight: bool = False,
    log_bound: float | None = None,
    active: np.ndarray | None = None,
    stopped_step: np.ndarray | None = None,
    stopped_reason: np.ndarray | None = None,
    record: bool = False,
    collision_guard: float = COLLISION_GUARD,
) -> LegResult:
    """Advance an ensemble for len(deltas) substeps with driving in column
    `slot`.  Paths whose smallest companion gap enters the collision layer
    (gap^2 <= collision_guard^2 * dt, checked at the substep start) freeze
    there with reason `swallowed`; bound-stopped paths freeze at the
    boundary where |M| first exceeded the bound."""
    x = np.array(x, dtype=float)
    n, n_pts = x.shape
    comp = np.array([c for c in range(n_pts) if c != slot], dtype=int)
    derivs = np.ones_like(x)
    sqk = math.sqrt(kappa)
    if active is None:
        active = np.ones(n, dtype=bool)
    else:
        active = active.copy()
    if stopped_step is None:
        stopped_step = np.full(n, -1, dtype=int)
    else:
        stopped_step = stopped_step.copy()
    if stopped_reason is None:
        stopped_reason = np.zeros(n, dtype=np.int8)
    else:
        stopped_reason = stopped_reason.copy()

    log_m = log_m0 = None
    if track_weight:
        log_m = log_z_cols(exponent, x)
        log_m0 = log_m.copy()

    trace = [] if record else None
    if record:
        trace.append({"x": x.copy(), "derivs": derivs.copy(),
                      "log_m": None if log_m is None else log_m.copy()})

    guard2 = max(collision_guard, 2.0) ** 2
    for k, delta in enumerate(deltas):
        U0 = x[:, slot]
        x_new = x.copy()
        d_new = derivs.copy()
        if comp.size:
            xc = x[:, comp]
            dgap = xc - U0[:, None]
            layer = (dgap * dgap <= guard2 * delta).any(axis=1) & active
            if layer.any():
                stopped_step[layer] = k
                stopped_reason[layer] = REASON_SWALLOWED
                active = active & ~layer
            if mode == BACKWARD:
                # active paths sit outside the layer, so arg > 0 throughout
                arg = dgap * dgap - 4.0 * delta
                root = np.sqrt(np.maximum(arg, 1e-300))
            else:
                root = np.sqrt(dgap * dgap + 4.0 * delta)
            x_new[:, comp] = U0[:, None] + np.sign(dgap) * root
            d_new[:, comp] = derivs[:, comp] * (np.abs(dgap) / root)
            if drifted:
                b = kappa * exponent * np.sum(1.0 / (U0[:, None] - xc), axis=1)
            else:
                b = 0.0
        else:
            b = 0.0
        x_new[:, slot] = U0 + sqk * math.sqrt(delta) * normals[:, k] + b * delta

        x = np.where(active[:, None], x_new, x)
        derivs = np.where(active[:, None], d_new, derivs)
        if comp.size and active.any():
            dact = derivs[active][:, comp]
            if np.any(dact <= 0.0) or np.any(dact >= DERIV_CAP):
                raise NumericalBlowup("companion derivative left (0, 1e300)")

        if track_weight:
            lm_new = (h_weight * np.sum(np.log(derivs[:, comp]), axis=1)
                      + log_z_cols(exponent, x))
            log_m = np.where(active, lm_new, log_m)
            if log_bound is not None:
                hit = active & (log_m > log_bound)
                if hit.any():
                    stopped_step[hit] = k + 1
                    stopped_reason[hit] = REASON_BOUND
                    active = active & ~hit
        if record:
            trace.append({"x": x.copy(), "derivs": derivs.copy(),
                          "log_m": None if log_m is None else log_m.copy()})

    return LegResult(x, derivs, active, stopped_step, stopped_reason,
                     log_m, log_m0, trace)


@dataclass(frozen=True)
class SlePathSample:
    """One simulated path with its weight trace and stop bookkeeping."""

    params: Params
    index_i: int
    path: DrivingPath
    states: tuple[ChainState, ...]
    weight_trace: np.ndarray
    stopped_at: tuple[int, str] | None


def simulate_ith_sle(
    params: Params,
    spec: PartitionSpec,
    cfg: PointConfig,
    i: int,
    T: float,
    dt: float,
    rng: RngSpec,
    measure: str = MEASURE_BASE_P,
    bound_n: float | None = None,
    states_stride: int = 1,
) -> SlePathSample:
    """Simulate one path of the i-th SLE(kappa, b) and record its trace.

    base_P / reweighted_P: driftless driving, weight trace M_t/M_0 frozen at
    the stopping time.  drifted_Q: drift b_i added to the driving and the
    weight trace reported as identically 1 (the M functional is still
    tracked internally for the stopping rule).
    """
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}")
    if not 0 <= i < len(cfg):
        raise IndexError(f"driving index {i} out of range")
    deltas = step_sizes(T, dt)
    if not np.allclose(deltas, deltas[0]):
        raise ValueError("single-path simulation needs T to be a multiple of dt")
    m = deltas.size
    normals = normal_block(rng.seed, rng.path_index, 1, m)
    x0 = cfg.as_array()[None, :]
    if bound_n is None:
        bound_n = 10.0 * z_value(spec, cfg)
    res = run_leg(
        params.mode, params.kappa, spec.exponent, spec.h_weight,
        x0, i, normals, deltas,
        drifted=(measure == MEASURE_DRIFTED_Q),
        track_weight=True, log_bound=math.log(bound_n), record=True,
    )
    comp = [c for c in range(len(cfg)) if c != i]
    states = []
    weights = []
    t = 0.0
    times = np.concatenate([[0.0], np.cumsum(deltas)])
    for k, snap in enumerate(res.trace):
        weights.append(math.exp(snap["log_m"][0] - res.log_m0[0]))
        if k % states_stride == 0 or k == m:
            t = times[k]
            states.append(ChainState(
                time=t, mode=params.mode,
                marked_values=snap["x"][0, comp].copy(),
                marked_derivs=snap["derivs"][0, comp].copy(),
                bulk_values=np.empty(0, dtype=complex),
                bulk_derivs=np.empty(0, dtype=complex),
                hcap_accum=2.0 * t,
                marked_initial=x0[0, comp].copy(),
                bulk_initial=np.empty(0, dtype=complex),
            ))
    weight_trace = np.asarray(weights)
    stop = None
    if res.stopped_step[0] >= 0:
        stop = (int(res.stopped_step[0]), REASON_NAMES[int(res.stopped_reason[0])])
    if measure == MEASURE_DRIFTED_Q:
        weight_trace = np.ones_like(weight_trace)
    w_values = np.array([snap["x"][0, i] for snap in res.trace])
    # Recover raw Brownian increments from the recorded normals.
    increments = np.sqrt(deltas) * normals[0]
    path = DrivingPath(dt=dt, n_steps=m, increments=increments, values=w_values)
    return SlePathSample(params, i, path, tuple(states), weight_trace, stop)


def _chunk_ranges(n_paths: int, chunk: int = DEFAULT_CHUNK):
    out = []
    first = 0
    while first < n_paths:
        out.append((first, min(chunk, n_paths - first)))
        first += chunk
    return out


def map_chunks(fn: Callable, tasks: Sequence, n_workers: int = 1) -> list:
    """Run chunk tasks sequentially or on a process pool; aggregation by the
    caller must be associative so the worker count never changes results."""
    if n_workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_workers) as ex:
        return list(ex.map(fn, tasks))


def _ensemble_chunk(task: dict) -> dict:
    """Terminal sufficient statistics for one chunk of paths."""
    deltas = step_sizes(task["T"], task["dt"])
    normals = normal_block(task["seed"], task["first_path"], task["count"],
                           deltas.size)
    x0 = np.tile(np.asarray(task["points"]), (task["count"], 1))
    res = run_leg(
        task["mode"], task["kappa"], task["exponent"], task["h_weight"],
        x0, task["slot"], normals, deltas,
        drifted=task["drifted"], track_weight=True,
        log_bound=task["log_bound"],
    )
    w = np.exp(res.log_m - res.log_m0)
    obs = task["observable"]
    f = obs(res.x) if obs is not None else np.zeros(task["count"])
    return {
        "n": task["count"],
        "sw": float(np.sum(w)),
        "sw2": float(np.sum(w * w)),
        "swf": float(np.sum(w * f)),
        "sw2f": float(np.sum(w * w * f)),
        "sw2f2": float(np.sum(w * w * f * f)),
        "sf": float(np.sum(f)),
        "sf2": float(np.sum(f * f)),
        "n_swallowed": int(np.sum(res.stopped_reason == REASON_SWALLOWED)),
        "n_bound": int(np.sum(res.stopped_reason == REASON_BOUND)),
    }


def _sum_stats(stats: list[dict]) -> dict:
    keys = stats[0].keys()
    return {k: sum(s[k] for s in stats) for k in keys}


def _ensemble_stats(params, spec, cfg, i, T, dt, n_paths, bound_n, seed,
                    first_path, drifted, observable, n_workers) -> dict:
    log_bound = None if bound_n is None else math.log(bound_n)
    tasks = [
        {
            "mode": params.mode, "kappa": params.kappa,
            "exponent": spec.exponent, "h_weight": spec.h_weight,
            "points": tuple(cfg.points), "slot": i, "T": T, "dt": dt,
            "seed": seed, "first_path": first_path + a, "count": c,
            "drifted": drifted, "log_bound": log_bound,
            "observable": observable,
        }
        for a, c in _chunk_ranges(n_paths)
    ]
    return _sum_stats(map_chunks(_ensemble_chunk, tasks, n_workers))


def martingale_check(
    params: Params,
    spec: PartitionSpec,
    cfg: PointConfig,
    i: int,
    T: float,
    dt: float,
    n_paths: int,
    bound_n: float | None = None,
    seed: int = 0,
    n_workers: int = 1,
) -> McReport:
    """Optional-stopping test: mean of M_{T and tau}/M_0 against 1."""
    if bound_n is None:
        bound_n = 10.0 * z_value(spec, cfg)
    st = _ensemble_stats(params, spec, cfg, i, T, dt, n_paths, bound_n, seed,
                         0, drifted=False, observable=None, n_workers=n_workers)
    n = st["n"]
    mean = st["sw"] / n
    var = max(st["sw2"] / n - mean * mean, 0.0) * n / max(n - 1, 1)
    se = math.sqrt(var / n)
    return make_report(
        f"martingale_mean_weight_k{params.kappa:g}_N{len(cfg)}",
        mean, se, 1.0, 3.0 * se, n,
    )


def girsanov_check(
    params: Params,
    spec: PartitionSpec,
    cfg: PointConfig,
    i: int,
    observable: Callable[[np.ndarray], np.ndarray] | None,
    T: float,
    dt: float,
    n_paths: int,
    bound_n: float | None = None,
    seed: int = 0,
    n_workers: int = 1,
    name: str = "girsanov",
) -> McReport:
    """Reweighted base-measure mean against the drifted-measure mean.

    Arm 1 simulates driftless paths and weights the observable by the
    terminal M/M_0 (self-normalized); arm 2 simulates drifted paths stopped
    by the same bound rule applied to their reconstructed M.  The two arms
    use disjoint path_index ranges, hence independent streams.
    """
    if observable is None:
        observable = companion_observable(i, len(cfg))
    if bound_n is None:
        bound_n = 10.0 * z_value(spec, cfg)
    base = _ensemble_stats(params, spec, cfg, i, T, dt, n_paths, bound_n,
                           seed, 0, drifted=False, observable=observable,
                           n_workers=n_workers)
    drift = _ensemble_stats(params, spec, cfg, i, T, dt, n_paths, bound_n,
                            seed, n_paths, drifted=True, observable=observable,
                            n_workers=n_workers)
    n = base["n"]
    ess = base["sw"] ** 2 / max(base["sw2"], 1e-300)
    if ess < 0.01 * n:
        raise EffectiveSampleCollapse(
            f"effective sample size {ess:.1f} below 1% of {n} paths")
    est1 = base["swf"] / base["sw"]
    var1 = (base["sw2f2"] - 2.0 * est1 * base["sw2f"] + est1**2 * base["sw2"])
    se1 = math.sqrt(max(var1, 0.0)) / base["sw"]
    m = drift["n"]
    est2 = drift["sf"] / m
    var2 = max(drift["sf2"] / m - est2 * est2, 0.0) * m / max(m - 1, 1)
    se2 = math.sqrt(var2 / m)
    pooled = math.hypot(se1, se2)
    return make_report(name, est1, pooled, est2, 3.0 * pooled, n)


def companion_observable(i: int, n_points: int, j: int | None = None):
    """Terminal position of companion j (default: first index != i)."""
    if j is None:
        j = 0 if i != 0 else 1
    if j == i or not 0 <= j < n_points:
        raise IndexError(f"companion index {j} invalid for driver {i}")

    def obs(x: np.ndarray) -> np.ndarray:
        return x[:, j]

    return obs


def _bulk_backward_terminal(z0: complex, kappa: float, normals: np.ndarray,
                            dt: float):
    """Backward chains tracking one bulk point; driving from 0 with the
    given standard-normal increments.  Returns (f_T(z0), W_T) per path."""
    n, m = normals.shape
    sq = math.sqrt(kappa * dt)
    W = np.zeros(n)
    Z = np.full(n, complex(z0), dtype=complex)
    for k in range(m):
        d = Z - W
        s = np.sqrt(d * d - 4.0 * dt)
        s = np.where(s.imag < 0, -s, s)
        Z = W + s
        W = W + sq * normals[:, k]
    return Z, W


def _inverse_chunk(task: dict) -> dict:
    m = task["n_steps"]
    normals = normal_block(task["seed"], task["first_path"], task["count"], m)
    if task["reversed"]:
        normals = -normals[:, ::-1]
    Z, W = _bulk_backward_terminal(task["z0"], task["kappa"], normals,
                                   task["dt"])
    val = Z - W
    bad = ~(val.imag > 0.0) | ~np.isfinite(val.real) | ~np.isfinite(val.imag)
    re, im = val.real[~bad], val.imag[~bad]
    out = {"n": int((~bad).sum()), "n_failed": int(bad.sum())}
    for tag, arr in (("re", re), ("im", im)):
        for p in (1, 2, 3, 4):
            out[f"{tag}{p}"] = float(np.sum(arr**p))
    return out


def _moment_stats(st: dict, tag: str):
    """(mean, variance, SE of mean, SE of variance) from raw moment sums."""
    n = st["n"]
    m1 = st[f"{tag}1"] / n
    c2 = st[f"{tag}2"] / n - m1 * m1
    c4 = (st[f"{tag}4"] / n - 4 * m1 * st[f"{tag}3"] / n
          + 6 * m1**2 * st[f"{tag}2"] / n - 3 * m1**4)
    se_mean = math.sqrt(max(c2, 0.0) / n)
    se_var = math.sqrt(max(c4 - c2 * c2, 0.0) / n)
    return m1, c2, se_mean, se_var


def inverse_law_check(
    kappa: float,
    z0: complex,
    T: float,
    dt: float,
    n_paths: int,
    seed: int = 0,
    n_workers: int = 1,
) -> list[McReport]:
    """Distributional identity between the hydrodynamically-centered
    backward map f_T(z0) - W_T and the inverse of the centered forward map.

    The inverse sample runs a backward chain driven by the time-reversed,
    negated increments of an independent forward driving path and subtracts
    the final driving value.  Compares means and variances of the real and
    imaginary parts.
    """
    if not complex(z0).imag > 0:
        raise ValueError("z0 must lie in the upper half-plane")
    deltas = step_sizes(T, dt)
    if not np.allclose(deltas, deltas[0]):
        raise ValueError("inverse check needs T to be a multiple of dt")
    m = deltas.size

    def arm(first: int, rev: bool) -> dict:
        tasks = [
            {"z0": complex(z0), "kappa": kappa, "dt": float(deltas[0]),
             "n_steps": m, "seed": seed, "first_path": first + a, "count": c,
             "reversed": rev}
            for a, c in _chunk_ranges(n_paths)
        ]
        return _sum_stats(map_chunks(_inverse_chunk, tasks, n_workers))

    a = arm(0, rev=False)
    b = arm(n_paths, rev=True)
    for st in (a, b):
        if st["n_failed"] > 0.01 * n_paths:
            raise SwallowedTooOften(
                f"{st['n_failed']} of {n_paths} inverse paths failed")

    reports = []
    for tag, label in (("re", "real"), ("im", "imag")):
        ma, va, sma, sva = _moment_stats(a, tag)
        mb, vb, smb, svb = _moment_stats(b, tag)
        se_mean = math.hypot(sma, smb)
        se_var = math.hypot(sva, svb)
        reports.append(make_report(f"inverse_mean_{label}", ma, se_mean, mb,
                                   3.0 * se_mean, a["n"]))
        reports.append(make_report(f"inverse_var_{label}", va, se_var, vb,
                                   3.0 * se_var, a["n"]))
    return reports
