"""Coupling of Loewner flows to a free boundary field.

A harmonic observable is attached to every bulk point z: the field value
u at the flowed point plus a curvature term built from the map derivative,

    backward:  h_t(z) = u(f_t(z); x_1..x_N with W_t in slot i) + Q log|f'_t(z)|
    forward:   h_t(z) = u(g_t(z); ...)                         - chi arg g'_t(z)

where u is the real (backward) or imaginary (forward) part of the
holomorphic sum  -(2/sqrt(kappa)) sum_k eps_k log(z - x_k).  Under the
drifted measure h_t(z) is a martingale in t for every fixed z, and the
cross variation of h(z), h(w) equals the decrease of a boundary Green
function along the flow.  Both statements are checked here by Monte
Carlo; the stationarity of u itself is checked as an exact PDE residual
via finite differences.

Sign conventions are load bearing: the backward coupling needs every
eps_k = -1 and sqrt(kappa) in {gamma, 4/gamma}; the forward one needs
eps_k = +1 with chi = 2/sqrt(kappa) - sqrt(kappa)/2 for kappa < 4 and
the mirrored pair for kappa > 4.  Controls flip a sign and must fail.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    BACKWARD,
    FORWARD,
    DrivingPath,
    McReport,
    Params,
    PointConfig,
    _check_mode,
    make_report,
    normal_block,
    validate_config,
)
from .loewner import Swallowed, slit_complex, slit_real
from .partition import (
    PartitionSpec,
    StepTooLarge,
    fd_first,
    fd_second,
    grad_log_z_cols,
    log_z_cols,
    min_gap,
)
from .sampler import DEFAULT_CHUNK, REASON_NONE, REASON_SWALLOWED, map_chunks, step_sizes

NEUMANN = "neumann"
DIRICHLET = "dirichlet"
GREEN_KINDS = (NEUMANN, DIRICHLET)

# Green kind is tied to the flow direction: reflecting boundary for the
# backward (dilating) flow, absorbing for the forward one.
MODE_GREEN = {BACKWARD: NEUMANN, FORWARD: DIRICHLET}

_RELATION_TOL = 1e-9
_COINCIDENT_TOL = 1e-14


class CoincidentPoints(ValueError):
    """Green function evaluated at z == w (or z == conj(w))."""


class BadCouplingParameters(ValueError):
    """Field/curve parameters outside the coupled regime."""


def q_charge(gamma: float) -> float:
    if gamma <= 0:
        raise BadCouplingParameters(f"gamma must be positive, got {gamma}")
    return 2.0 / gamma + gamma / 2.0


def forward_chi(kappa: float) -> float:
    if kappa <= 0:
        raise BadCouplingParameters(f"kappa must be positive, got {kappa}")
    if kappa == 4.0:
        raise BadCouplingParameters("forward coupling is degenerate at kappa = 4")
    rk = math.sqrt(kappa)
    return 2.0 / rk - rk / 2.0 if kappa < 4.0 else rk / 2.0 - 2.0 / rk


def default_epsilon_signs(mode: str, kappa: float, n_points: int) -> Tuple[int, ...]:
    _check_mode(mode)
    if mode == BACKWARD:
        return (-1,) * n_points
    return ((1,) if kappa < 4.0 else (-1,)) * n_points


def check_backward_relation(kappa: float, gamma: float) -> None:
    """sqrt(kappa) must equal gamma or 4/gamma for the backward coupling."""
    rk = math.sqrt(kappa)
    if abs(rk - gamma) > _RELATION_TOL and abs(rk - 4.0 / gamma) > _RELATION_TOL:
        raise BadCouplingParameters(
            f"backward coupling needs sqrt(kappa) = gamma or 4/gamma; "
            f"got kappa={kappa}, gamma={gamma}"
        )


@dataclasses.dataclass(frozen=True)
class CouplingSpec:
    """Field side of a coupled flow: charges, signs, and which part of
    the holomorphic sum is the field.

    epsilon_signs are stored as given (controls deliberately set wrong
    signs); the canonical values are enforced only by the checks that
    assume them, via `require_coupled`.
    """

    params: Params
    pspec: PartitionSpec
    epsilon_signs: Tuple[int, ...]
    q_charge: Optional[float] = None
    chi: Optional[float] = None

    def __post_init__(self) -> None:
        if len(self.epsilon_signs) != self.params.n_points:
            raise ValueError("need one epsilon sign per boundary point")
        if any(abs(e) != 1 for e in self.epsilon_signs):
            raise ValueError("epsilon signs must be +1 or -1")
        if self.params.mode == BACKWARD and self.q_charge is None:
            raise ValueError("backward coupling needs q_charge")
        if self.params.mode == FORWARD and self.chi is None:
            raise ValueError("forward coupling needs chi")

    @property
    def mode(self) -> str:
        return self.params.mode

    @property
    def kappa(self) -> float:
        return self.params.kappa

    @property
    def curvature_constant(self) -> float:
        return self.q_charge if self.mode == BACKWARD else self.chi

    def require_coupled(self) -> None:
        """Reject parameter combinations outside the coupling theorems."""
        if self.mode == BACKWARD:
            if self.params.gamma is None:
                raise BadCouplingParameters("backward coupling needs gamma")
            check_backward_relation(self.kappa, self.params.gamma)
            want = q_charge(self.params.gamma)
            if abs(self.q_charge - want) > _RELATION_TOL:
                raise BadCouplingParameters(
                    f"q_charge {self.q_charge} != 2/gamma + gamma/2 = {want}"
                )
        else:
            want = forward_chi(self.kappa)
            if abs(self.chi - want) > _RELATION_TOL:
                raise BadCouplingParameters(
                    f"chi {self.chi} does not match kappa={self.kappa} "
                    f"(expected {want})"
                )
        canonical = default_epsilon_signs(self.mode, self.kappa, self.params.n_points)
        if tuple(self.epsilon_signs) != canonical:
            raise BadCouplingParameters(
                f"epsilon signs {self.epsilon_signs} are not the coupled "
                f"choice {canonical} for this mode/kappa"
            )


def make_coupling_spec(
    params: Params,
    epsilon_signs: Optional[Sequence[int]] = None,
) -> CouplingSpec:
    pspec = PartitionSpec(params.mode, params.kappa, params.n_points)
    if epsilon_signs is None:
        if params.epsilon_signs is not None:
            epsilon_signs = params.epsilon_signs
        else:
            epsilon_signs = default_epsilon_signs(
                params.mode, params.kappa, params.n_points
            )
    if params.mode == BACKWARD:
        if params.gamma is None:
            raise BadCouplingParameters("backward coupling needs gamma in Params")
        return CouplingSpec(
            params, pspec, tuple(epsilon_signs), q_charge=q_charge(params.gamma)
        )
    chi = params.chi if params.chi is not None else forward_chi(params.kappa)
    return CouplingSpec(params, pspec, tuple(epsilon_signs), chi=chi)


# ---------------------------------------------------------------------------
# Field building blocks


def green(kind: str, z: complex, w: complex) -> float:
    """Boundary Green function of the upper half plane.

    neumann:   -log|z-w| - log|z-conj(w)|
    dirichlet: -log|z-w| + log|z-conj(w)|
    """
    if kind not in GREEN_KINDS:
        raise ValueError(f"unknown Green kind {kind!r}")
    za = np.asarray(z, dtype=complex)
    wa = np.asarray(w, dtype=complex)
    direct = np.abs(za - wa)
    mirror = np.abs(za - np.conj(wa))
    if np.any(direct < _COINCIDENT_TOL) or np.any(mirror < _COINCIDENT_TOL):
        raise CoincidentPoints(f"Green function singular at z={z}, w={w}")
    sign = -1.0 if kind == NEUMANN else 1.0
    out = -np.log(direct) + sign * np.log(mirror)
    if np.isscalar(z) and np.isscalar(w):
        return float(out)
    return out


def holo_u_tilde(
    z: np.ndarray | complex,
    points: np.ndarray | Sequence[float],
    kappa: float,
    epsilon_signs: Sequence[int],
) -> np.ndarray | complex:
    """-(2/sqrt(kappa)) sum_k eps_k Log(z - x_k), principal branch."""
    za = np.asarray(z, dtype=complex)
    xs = np.asarray(points, dtype=float)
    eps = np.asarray(epsilon_signs, dtype=float)
    diff = za[..., None] - xs
    val = -(2.0 / math.sqrt(kappa)) * np.sum(eps * np.log(diff), axis=-1)
    if np.isscalar(z):
        return complex(val)
    return val


def boundary_u(
    mode: str,
    z: np.ndarray | complex,
    points: np.ndarray | Sequence[float],
    kappa: float,
    epsilon_signs: Sequence[int],
) -> np.ndarray | float:
    """Real part of the holomorphic sum backward, imaginary part forward."""
    _check_mode(mode)
    val = holo_u_tilde(z, points, kappa, epsilon_signs)
    out = np.real(val) if mode == BACKWARD else np.imag(val)
    if np.isscalar(z):
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Stationarity PDE residual (finite differences)


def _coupling_scale(cfg: PointConfig, z: complex) -> float:
    xs = np.asarray(cfg.points, dtype=float)
    dist = float(np.min(np.abs(z - xs)))
    scale = dist if len(xs) < 2 else min(dist, min_gap(cfg))
    return scale


def coupling_pde_residual(
    cspec: CouplingSpec,
    z: complex,
    cfg: PointConfig,
    i: int,
    fd_step: Optional[float] = None,
) -> float:
    """Relative residual of the defining relation for X = u_tilde * Z.

    backward: (k/2) X_ii - 2 sum_j (X_j/(x_j-x_i) - h X/(x_j-x_i)^2)
              - (2/(z-x_i)) X_z + 2 Q Z/(z-x_i)^2       = 0
    forward:  same with both interior signs flipped and chi for Q.
    """
    validate_config(cfg.points)
    if not (0 <= i < len(cfg.points)):
        raise IndexError(f"slot {i} out of range for {len(cfg.points)} points")
    if np.imag(z) <= 0:
        raise ValueError("bulk point must satisfy Im z > 0")
    spec = cspec.pspec
    eps = cspec.epsilon_signs
    kappa = cspec.kappa
    scale = _coupling_scale(cfg, z)
    h = 1e-4 * scale if fd_step is None else float(fd_step)
    if h <= 0:
        raise StepTooLarge("fd_step must be positive")
    if h >= scale / 10.0:
        raise StepTooLarge(
            f"fd_step {h} too large for point scale {scale} (needs < scale/10)"
        )
    x0 = np.asarray(cfg.points, dtype=float)
    z_center = math.exp(log_z_cols(spec.exponent, x0))

    def x_fn(x: np.ndarray) -> complex:
        zval = math.exp(log_z_cols(spec.exponent, x))
        return complex(holo_u_tilde(z, x, kappa, eps)) * zval

    def x_of_z(shift: np.ndarray) -> complex:
        # real-direction shift of z; enough for d/dz of a holomorphic factor
        return complex(holo_u_tilde(z + shift[0], x0, kappa, eps)) * z_center

    sgn = -1.0 if cspec.mode == BACKWARD else 1.0
    hk = spec.h_weight
    x_center = x_fn(x0)
    acc = 0.5 * kappa * fd_second(x_fn, x0, i, h)
    for j in range(len(x0)):
        if j == i:
            continue
        gap = x0[j] - x0[i]
        acc += sgn * 2.0 * (fd_first(x_fn, x0, j, h) / gap - hk * x_center / gap**2)
    acc += sgn * (2.0 / (z - x0[i])) * fd_first(x_of_z, np.zeros(1), 0, h)
    acc += 2.0 * cspec.curvature_constant * z_center / (z - x0[i]) ** 2
    return float(abs(acc) / abs(z_center))


# ---------------------------------------------------------------------------
# Coupled flow ensembles


class BulkSwallowed(Swallowed):
    """A tracked bulk point hit the driving singularity."""


def _field_values(
    mode: str,
    kappa: float,
    eps: np.ndarray,
    curvature: float,
    x: np.ndarray,
    zb: np.ndarray,
    db: np.ndarray,
) -> np.ndarray:
    """h for every path/bulk point; x (n,N), zb/db (n,M) -> (n,M)."""
    diff = zb[:, None, :] - x[:, :, None]
    u = -(2.0 / math.sqrt(kappa)) * np.einsum("k,nkm->nm", eps, np.log(np.abs(diff)))
    if mode == BACKWARD:
        return u + curvature * np.log(np.abs(db))
    return u - curvature * np.angle(db)


def _pair_green(kind: str, zb: np.ndarray, pairs: List[Tuple[int, int]]) -> np.ndarray:
    """Green function per path for each tracked pair; zb (n,M) -> (n,P)."""
    cols = []
    sign = 1.0 if kind == DIRICHLET else -1.0
    for a, b in pairs:
        za = zb[:, a]
        wb = zb[:, b]
        cols.append(-np.log(np.abs(za - wb)) + sign * np.log(np.abs(za - np.conj(wb))))
    return np.stack(cols, axis=1) if cols else np.zeros((zb.shape[0], 0))


def _h_run(
    cspec: CouplingSpec,
    cfg: PointConfig,
    i: int,
    bulk: Sequence[complex],
    deltas: np.ndarray,
    normals: np.ndarray,
    record: bool = False,
) -> Dict[str, np.ndarray]:
    """Drifted-measure flow of n paths carrying field observables.

    Companions move by exact slit maps; the driver by Euler steps of
    dW = sqrt(kappa) dB + kappa (d/dW) log Z dt with the drift frozen at
    each substep start.  Paths whose companion or tracked bulk point is
    swallowed are frozen at the start of the offending substep and kept
    (their h increments vanish from then on).
    """
    mode = cspec.mode
    kappa = cspec.kappa
    eps = np.asarray(cspec.epsilon_signs, dtype=float)
    curvature = cspec.curvature_constant
    exponent = cspec.pspec.exponent
    kind = MODE_GREEN[mode]
    n = normals.shape[0]
    n_pts = len(cfg.points)
    x = np.tile(np.asarray(cfg.points, dtype=float), (n, 1))
    zb = np.tile(np.asarray(bulk, dtype=complex), (n, 1))
    db = np.ones_like(zb)
    m_bulk = zb.shape[1]
    pairs = [(a, b) for a in range(m_bulk) for b in range(a + 1, m_bulk)]
    active = np.ones(n, dtype=bool)
    reason = np.zeros(n, dtype=np.int8)
    stopped_step = np.full(n, -1, dtype=np.int64)

    h_prev = _field_values(mode, kappa, eps, curvature, x, zb, db)
    h0 = h_prev.copy()
    g0 = _pair_green(kind, zb, pairs)
    accum = np.zeros_like(g0)
    rec_h = [h_prev.copy()] if record else None
    rec_w = [x[:, i].copy()] if record else None

    others = [k for k in range(n_pts) if k != i]
    for step in range(deltas.size):
        delta = deltas[step]
        u0 = x[:, i]
        xc = x[:, others] if others else np.zeros((n, 0))
        new_c, mult_c, bad_c = slit_real(xc, u0[:, None], delta, mode)
        new_b, mult_b, bad_b = slit_complex(zb, u0[:, None], delta, mode)
        swallowed_now = active & (np.any(bad_c, axis=1) | np.any(bad_b, axis=1))
        if np.any(swallowed_now):
            reason[swallowed_now] = REASON_SWALLOWED
            stopped_step[swallowed_now] = step
            active = active & ~swallowed_now
        drift = kappa * exponent * np.sum(
            np.where(np.abs(u0[:, None] - xc) > 0, 1.0 / (u0[:, None] - xc), 0.0),
            axis=1,
        )
        w_new = u0 + math.sqrt(kappa) * math.sqrt(delta) * normals[:, step] + drift * delta
        upd = active[:, None]
        if others:
            x[:, others] = np.where(upd, new_c, x[:, others])
        x[:, i] = np.where(active, w_new, x[:, i])
        zb = np.where(upd, new_b, zb)
        db = np.where(upd, db * mult_b, db)
        h_new = _field_values(mode, kappa, eps, curvature, x, zb, db)
        dh = h_new - h_prev
        for p, (a, b) in enumerate(pairs):
            accum[:, p] += dh[:, a] * dh[:, b]
        h_prev = h_new
        if record:
            rec_h.append(h_new.copy())
            rec_w.append(x[:, i].copy())
    gt = _pair_green(kind, zb, pairs)
    out = {
        "h0": h0,
        "ht": h_prev,
        "accum": accum,
        "g_drop": g0 - gt,
        "active": active,
        "reason": reason,
        "stopped_step": stopped_step,
    }
    if record:
        out["rec_h"] = np.stack(rec_h, axis=0)
        out["rec_w"] = np.stack(rec_w, axis=0)
    return out


@dataclasses.dataclass(frozen=True)
class HProcessSample:
    """One coupled path: driving, field values along it, and the pairwise
    cross-variation ledger against the Green function drop."""

    params: Params
    index_i: int
    bulk_points: Tuple[complex, ...]
    path: DrivingPath
    h_values: np.ndarray  # (n_steps+1, n_bulk)
    cross_var: Dict[Tuple[int, int], float]
    green_start: Dict[Tuple[int, int], float]
    green_end: Dict[Tuple[int, int], float]
    stopped_at: Optional[int]


def simulate_h_process(
    cspec: CouplingSpec,
    cfg: PointConfig,
    i: int,
    bulk: Sequence[complex],
    t_final: float,
    dt: float,
    seed: int,
    path_index: int = 0,
) -> HProcessSample:
    validate_config(cfg.points)
    if not (0 <= i < len(cfg.points)):
        raise IndexError(f"slot {i} out of range")
    if any(np.imag(zz) <= 0 for zz in bulk):
        raise ValueError("bulk points must satisfy Im z > 0")
    deltas = step_sizes(t_final, dt)
    if not np.allclose(deltas, deltas[0]):
        raise ValueError("single-path simulation needs t_final a multiple of dt")
    normals = normal_block(seed, path_index, 1, deltas.size)
    run = _h_run(cspec, cfg, i, bulk, deltas, normals, record=True)
    if not run["active"][0]:
        # ensemble checks keep frozen paths (stopped martingale), but a
        # single sample is meant for the pathwise cross-variation identity,
        # which needs the full horizon
        step = int(run["stopped_step"][0])
        raise BulkSwallowed(
            f"coupled flow stopped at step {step} of {deltas.size}",
            step=step, time=step * float(deltas[0]),
        )
    w_vals = run["rec_w"][:, 0]
    incs = np.diff(w_vals)
    path = DrivingPath(
        dt=float(deltas[0]),
        n_steps=deltas.size,
        increments=incs,
        values=w_vals,
    )
    pairs = [
        (a, b) for a in range(len(bulk)) for b in range(a + 1, len(bulk))
    ]
    return HProcessSample(
        params=cspec.params,
        index_i=i,
        bulk_points=tuple(complex(zz) for zz in bulk),
        path=path,
        h_values=run["rec_h"][:, 0, :],
        cross_var={p: float(run["accum"][0, k]) for k, p in enumerate(pairs)},
        green_start={
            p: float(green(MODE_GREEN[cspec.mode], bulk[p[0]], bulk[p[1]]))
            for p in pairs
        },
        green_end={
            p: float(
                green(MODE_GREEN[cspec.mode], bulk[p[0]], bulk[p[1]])
                - run["g_drop"][0, k]
            )
            for k, p in enumerate(pairs)
        },
        stopped_at=None,
    )


def _h_chunk(task: dict) -> dict:
    cspec: CouplingSpec = task["cspec"]
    deltas = task["deltas"]
    normals = normal_block(task["seed"], task["first"], task["count"], deltas.size)
    run = _h_run(cspec, task["cfg"], task["i"], task["bulk"], deltas, normals)
    diff = run["ht"] - run["h0"]
    xv_err = run["accum"] - run["g_drop"]
    return {
        "n": diff.shape[0],
        "sh": diff.sum(axis=0),
        "sh2": (diff**2).sum(axis=0),
        "sx": run["accum"].sum(axis=0),
        "sg": run["g_drop"].sum(axis=0),
        "sd": xv_err.sum(axis=0),
        "sd2": (xv_err**2).sum(axis=0),
        "n_swallowed": int(np.sum(run["reason"] == REASON_SWALLOWED)),
    }


def _sum_chunks(parts: List[dict]) -> dict:
    total = dict(parts[0])
    for p in parts[1:]:
        for k, v in p.items():
            total[k] = total[k] + v
    return total


def _run_h_ensemble(
    cspec: CouplingSpec,
    cfg: PointConfig,
    i: int,
    bulk: Sequence[complex],
    t_final: float,
    dt: float,
    n_paths: int,
    seed: int,
    n_workers: int,
) -> dict:
    validate_config(cfg.points)
    if any(np.imag(zz) <= 0 for zz in bulk):
        raise ValueError("bulk points must satisfy Im z > 0")
    deltas = step_sizes(t_final, dt)
    tasks = []
    first = 0
    while first < n_paths:
        count = min(DEFAULT_CHUNK, n_paths - first)
        tasks.append(
            {
                "cspec": cspec,
                "cfg": cfg,
                "i": i,
                "bulk": tuple(bulk),
                "deltas": deltas,
                "seed": seed,
                "first": first,
                "count": count,
            }
        )
        first += count
    return _sum_chunks(map_chunks(_h_chunk, tasks, n_workers))


def coupling_martingale_check(
    cspec: CouplingSpec,
    cfg: PointConfig,
    i: int,
    bulk: Sequence[complex],
    t_final: float,
    dt: float,
    n_paths: int,
    seed: int = 0,
    n_workers: int = 1,
) -> List[McReport]:
    """Mean of h_T(z) - h_0(z) under the drifted measure, against zero.

    Tolerance is 3 standard errors per bulk point.  Paths whose companion
    is swallowed freeze at the swallow step and stay in the mean: the
    frozen value is h at a stopping time, and a stopped martingale still
    has mean h_0.  Unlike the path weight, h(z) for bulk z has no
    singularity at a companion collision, so no collision layer is needed.
    """
    stats = _run_h_ensemble(cspec, cfg, i, bulk, t_final, dt, n_paths, seed, n_workers)
    n = stats["n"]
    reports = []
    for m, zz in enumerate(bulk):
        mean = stats["sh"][m] / n
        var = max(stats["sh2"][m] / n - mean**2, 0.0)
        se = math.sqrt(var / n)
        reports.append(
            make_report(
                name=f"coupling_drift_z{m}_re{np.real(zz):g}_im{np.imag(zz):g}",
                estimate=float(mean),
                std_error=float(se),
                reference=0.0,
                tolerance=3.0 * se,
                n_samples=n,
            )
        )
    return reports


def cross_variation_experiment(
    cspec: CouplingSpec,
    cfg: PointConfig,
    i: int,
    bulk: Sequence[complex],
    t_final: float,
    dt: float,
    n_paths: int,
    seed: int = 0,
    n_workers: int = 1,
    rel_tolerance: float = 0.05,
) -> List[McReport]:
    """Discrete cross variation of h(z), h(w) vs the Green function drop.

    Both sides are averaged over paths; they agree to O(dt) per path, so
    the default tolerance is 5% of the reference magnitude (the drop is
    deterministic for these couplings, which makes it a clean yardstick).
    """
    if len(bulk) < 2:
        raise ValueError("cross variation needs at least two bulk points")
    stats = _run_h_ensemble(cspec, cfg, i, bulk, t_final, dt, n_paths, seed, n_workers)
    n = stats["n"]
    pairs = [(a, b) for a in range(len(bulk)) for b in range(a + 1, len(bulk))]
    reports = []
    for p, (a, b) in enumerate(pairs):
        est = stats["sx"][p] / n
        ref = stats["sg"][p] / n
        mean_d = stats["sd"][p] / n
        var_d = max(stats["sd2"][p] / n - mean_d**2, 0.0)
        se = math.sqrt(var_d / n)
        reports.append(
            make_report(
                name=f"crossvar_pair_{a}_{b}",
                estimate=float(est),
                std_error=float(se),
                reference=float(ref),
                tolerance=rel_tolerance * abs(ref),
                n_samples=n,
            )
        )
    return reports


def cross_variation_check(samples: Sequence[HProcessSample]) -> List[McReport]:
    """Same comparison from already-simulated single-path samples."""
    if not samples:
        raise ValueError("need at least one sample")
    pairs = sorted(samples[0].cross_var)
    if any(sorted(s.cross_var) != pairs for s in samples):
        raise ValueError("samples track different bulk pairs")
    n = len(samples)
    reports = []
    for a, b in pairs:
        xs = np.array([s.cross_var[(a, b)] for s in samples])
        gs = np.array(
            [s.green_start[(a, b)] - s.green_end[(a, b)] for s in samples]
        )
        d = xs - gs
        se = float(np.std(d) / math.sqrt(n))
        ref = float(np.mean(gs))
        reports.append(
            make_report(
                name=f"crossvar_pair_{a}_{b}",
                estimate=float(np.mean(xs)),
                std_error=se,
                reference=ref,
                tolerance=0.05 * abs(ref),
                n_samples=n,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# Deterministic Green increment identity


def green_increment_coefficient(
    mode: str, fz: complex, fw: complex, u0: float
) -> float:
    """Instantaneous rate of the Green function along the flow.

    backward (neumann):  -Re(2/(fz-u0)) Re(2/(fw-u0))
    forward (dirichlet): -Im(2/(fz-u0)) Im(2/(fw-u0))
    """
    _check_mode(mode)
    part = np.real if mode == BACKWARD else np.imag
    return float(-part(2.0 / (fz - u0)) * part(2.0 / (fw - u0)))


def green_increment_check(
    mode: str,
    kappa: float,
    z: complex,
    w: complex,
    t_final: float,
    dt: float,
    seed: int = 0,
    path_index: int = 0,
) -> float:
    """Per-substep check that dG/dt matches the rate coefficient.

    Within a substep the driving is frozen at u0, so the exact slit map
    makes (G_{k+1} - G_k)/delta equal the trapezoid average of the
    coefficient at the substep endpoints up to O(delta^2).  Returns the
    largest relative mismatch over the path; a wrong sign or a wrong
    Green kind shows up as O(1).
    """
    _check_mode(mode)
    if np.imag(z) <= 0 or np.imag(w) <= 0:
        raise ValueError("bulk points must satisfy Im z > 0")
    kind = MODE_GREEN[mode]
    deltas = step_sizes(t_final, dt)
    normals = normal_block(seed, path_index, 1, deltas.size)[0]
    pts = np.array([z, w], dtype=complex)
    u = 0.0
    worst = 0.0
    for k in range(deltas.size):
        delta = deltas[k]
        g_before = green(kind, pts[0], pts[1])
        p0 = green_increment_coefficient(mode, pts[0], pts[1], u)
        new, _, bad = slit_complex(pts[None, :], u, delta, mode)
        if np.any(bad):
            raise Swallowed("bulk point swallowed during Green increment check")
        pts = new[0]
        p1 = green_increment_coefficient(mode, pts[0], pts[1], u)
        g_after = green(kind, pts[0], pts[1])
        pbar = 0.5 * (p0 + p1)
        rel = abs((g_after - g_before) / delta - pbar) / max(abs(pbar), 1e-12)
        worst = max(worst, rel)
        u = u + math.sqrt(kappa * delta) * normals[k]
    return worst
