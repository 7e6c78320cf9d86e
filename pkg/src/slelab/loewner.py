"""Deterministic Loewner machinery.

Chains are integrated as compositions of exact slit maps over
piecewise-constant driving (zipper-style discretization), never by Euler
steps on the ODE: each substep is exact, so half-plane capacity accumulates
as exactly 2*dt per step and there is no stiffness at the driving point.

Substep closed forms, with d = w - U0 and step capacity 2*delta:

    backward:  w  ->  U0 + sqrt(d**2 - 4*delta)
    forward:   w  ->  U0 + sqrt(d**2 + 4*delta)

with the square-root branch of nonnegative imaginary part for complex w and
the sign of d for real w; both maps multiply an incoming derivative by
d / (new - U0).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import BACKWARD, FORWARD, DrivingPath, _check_mode

FORWARD_SWALLOW_GUARD = 1e-6
DEFAULT_PROBE_RADIUS = 1e4


class Swallowed(RuntimeError):
    """A tracked point was absorbed by the hull within a substep."""

    def __init__(self, msg: str, step: int | None = None, time: float | None = None):
        super().__init__(msg)
        self.step = step
        self.time = time


class SwallowedReference(ValueError):
    """Closed-form reference requested at a point the forward flow absorbs."""


class ProbeTooClose(RuntimeError):
    """Capacity probe is not far enough from the hull for the 1/z expansion."""


@dataclass(frozen=True)
class SubstepResult:
    new_value: complex | float
    new_deriv: complex | float
    swallowed: bool


def sqrt_him(q):
    """Square root with branch Im >= 0 (array-safe)."""
    s = np.sqrt(np.asarray(q, dtype=complex))
    return np.where(s.imag < 0, -s, s)


def substep_backward(w, U0: float, delta: float, deriv=1.0) -> SubstepResult:
    """One exact backward slit substep of capacity 2*delta at driving U0."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    d = w - U0
    if isinstance(w, complex) or np.iscomplexobj(w):
        new = U0 + complex(sqrt_him(d * d - 4.0 * delta))
        return SubstepResult(new, deriv * d / (new - U0), False)
    arg = d * d - 4.0 * delta
    if arg <= 0.0:
        raise Swallowed(
            f"real point {w} absorbed (swallowing time {d * d / 4.0})",
            time=d * d / 4.0,
        )
    new = U0 + np.sign(d) * np.sqrt(arg)
    return SubstepResult(float(new), deriv * d / (new - U0), False)


def substep_forward(w, U0: float, delta: float, deriv=1.0,
                    swallow_guard: float = FORWARD_SWALLOW_GUARD) -> SubstepResult:
    """One exact forward slit substep; complex points too close to the tip
    are refused, points whose image lands on the real axis are flagged."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    d = w - U0
    if isinstance(w, complex) or np.iscomplexobj(w):
        if abs(d) < swallow_guard:
            raise Swallowed(f"point {w} within swallow guard of the driving value")
        new = U0 + complex(sqrt_him(d * d + 4.0 * delta))
        swallowed = complex(w).imag > 0 and (new - U0).imag <= 0.0
        return SubstepResult(new, deriv * d / (new - U0), swallowed)
    new = U0 + np.sign(d) * np.sqrt(d * d + 4.0 * delta)
    return SubstepResult(float(new), deriv * d / (new - U0), False)


# Vectorized substeps for path-ensemble engines.  No exceptions: swallowed
# entries keep their incoming value/deriv and are reported through the mask.

def slit_real(x, U0, delta, mode: str):
    """(new_x, multiplier, swallowed) for arrays of real boundary points."""
    d = x - U0
    if mode == BACKWARD:
        arg = d * d - 4.0 * delta
        bad = arg <= 0.0
        root = np.sqrt(np.where(bad, 1.0, arg))
        new = np.where(bad, x, U0 + np.sign(d) * root)
        mult = np.where(bad, 1.0, np.abs(d) / root)
        return new, mult, bad
    root = np.sqrt(d * d + 4.0 * delta)
    new = U0 + np.sign(d) * root
    return new, np.abs(d) / root, np.zeros(np.shape(new), dtype=bool)


def slit_complex(z, U0, delta, mode: str):
    """(new_z, multiplier, swallowed) for arrays of interior points."""
    d = z - U0
    sign = -4.0 if mode == BACKWARD else 4.0
    s = sqrt_him(d * d + sign * delta)
    new = U0 + s
    if mode == BACKWARD:
        bad = np.zeros(np.shape(new), dtype=bool)
    else:
        bad = s.imag <= 0.0
        new = np.where(bad, z, new)
        s = np.where(bad, d, s)
    return new, d / s, bad


@dataclass(frozen=True)
class ChainState:
    """Snapshot of a chain: images and derivatives of the tracked points.

    marked_* are real boundary points, bulk_* complex interior points;
    *_initial keep the time-zero locations so capacity probes and
    finite-difference checks can find their points again.
    """

    time: float
    mode: str
    marked_values: np.ndarray
    marked_derivs: np.ndarray
    bulk_values: np.ndarray
    bulk_derivs: np.ndarray
    hcap_accum: float
    marked_initial: np.ndarray
    bulk_initial: np.ndarray


def initial_state(mode: str, marked=(), bulk=()) -> ChainState:
    """Time-zero state tracking the given boundary/interior points."""
    _check_mode(mode)
    mk = np.asarray(list(marked), dtype=float)
    bk = np.asarray(list(bulk), dtype=complex)
    if bk.size and not np.all(bk.imag > 0):
        raise ValueError("bulk points must have positive imaginary part")
    return ChainState(
        time=0.0,
        mode=mode,
        marked_values=mk.copy(),
        marked_derivs=np.ones_like(mk),
        bulk_values=bk.copy(),
        bulk_derivs=np.ones_like(bk),
        hcap_accum=0.0,
        marked_initial=mk.copy(),
        bulk_initial=bk.copy(),
    )


def evolve(state: ChainState, path: DrivingPath) -> ChainState:
    """Apply one exact substep per path step (driving frozen at the step
    start).  Raises Swallowed with the step index and the substep-local
    analytic swallowing time when a tracked point is absorbed."""
    mode = state.mode
    t = state.time
    dt = path.dt
    mk = state.marked_values.copy()
    mkd = state.marked_derivs.copy()
    bk = state.bulk_values.copy()
    bkd = state.bulk_derivs.copy()
    hcap = state.hcap_accum

    for k in range(path.n_steps):
        U0 = path.values[k]
        if mk.size:
            new, mult, bad = slit_real(mk, U0, dt, mode)
            if bad.any():
                j = int(np.argmax(bad))
                ts = (mk[j] - U0) ** 2 / 4.0
                raise Swallowed(
                    f"marked point {j} absorbed during step {k}",
                    step=k, time=t + ts,
                )
            mk, mkd = new, mkd * mult
        if bk.size:
            if mode == FORWARD and np.any(np.abs(bk - U0) < FORWARD_SWALLOW_GUARD):
                j = int(np.argmax(np.abs(bk - U0) < FORWARD_SWALLOW_GUARD))
                raise Swallowed(f"bulk point {j} within swallow guard at step {k}",
                                step=k, time=t)
            new, mult, bad = slit_complex(bk, U0, dt, mode)
            if bad.any():
                j = int(np.argmax(bad))
                ts = (bk[j] - U0).imag ** 2 / 4.0
                raise Swallowed(
                    f"bulk point {j} absorbed during step {k}",
                    step=k, time=t + ts,
                )
            bk, bkd = new, bkd * mult
        t += dt
        hcap += 2.0 * dt

    return replace(
        state,
        time=t,
        marked_values=mk,
        marked_derivs=mkd,
        bulk_values=bk,
        bulk_derivs=bkd,
        hcap_accum=hcap,
    )


def _find_bulk(state: ChainState, z0: complex) -> int:
    hits = np.flatnonzero(np.isclose(state.bulk_initial, z0, rtol=1e-12, atol=0.0))
    if hits.size == 0:
        raise ValueError(
            f"extract_hcap needs a bulk point tracked from {z0}; "
            "track i*probe_radius and 2i*probe_radius before evolving"
        )
    return int(hits[0])


def extract_hcap(state: ChainState, probe_radius: float = DEFAULT_PROBE_RADIUS) -> float:
    """Capacity read off the hydrodynamic expansion at z = i*probe_radius.

    Uses Re(z*(f(z) - z)): at a purely imaginary probe the real part kills
    the (real) first subleading coefficient, leaving errors O(radius**-2).
    The same quantity at 2i*probe_radius must agree within 1% or the probe
    is declared too close to the hull.
    """
    iR = _find_bulk(state, 1j * probe_radius)
    i2R = _find_bulk(state, 2j * probe_radius)
    z1, f1 = state.bulk_initial[iR], state.bulk_values[iR]
    z2, f2 = state.bulk_initial[i2R], state.bulk_values[i2R]
    m1 = abs(f1 - z1) * abs(z1)
    m2 = abs(f2 - z2) * abs(z2)
    scale = max(abs(m1), abs(m2), 1e-300)
    if state.time > 0 and abs(m1 - m2) > 0.01 * scale:
        raise ProbeTooClose(
            f"|f(z)-z|*|z| varies by {abs(m1 - m2) / scale:.2%} "
            f"between radius {probe_radius:g} and {2 * probe_radius:g}"
        )
    coef = (z1 * (f1 - z1)).real
    return -coef if state.mode == BACKWARD else coef


def reference_map_zero_driving(z, t: float, mode: str):
    """Closed form of the chain with zero driving: sqrt(z**2 -+ 4t), branch
    Im >= 0 (real inputs keep the sign of z)."""
    _check_mode(mode)
    if t < 0:
        raise ValueError("t must be nonnegative")
    sign = -4.0 if mode == BACKWARD else 4.0
    zc = complex(z)
    if zc.imag == 0.0:
        arg = zc.real**2 + sign * t
        if arg <= 0.0:
            raise SwallowedReference(f"real point {z} swallowed by time {t}")
        return float(np.sign(zc.real) * np.sqrt(arg))
    if mode == FORWARD and zc.real == 0.0 and zc.imag**2 <= 4.0 * t:
        raise SwallowedReference(f"point {z} swallowed by the forward flow at {t}")
    out = complex(sqrt_him(zc * zc + sign * t))
    if mode == FORWARD and out.imag <= 0.0 and zc.imag > 0.0:
        raise SwallowedReference(f"point {z} swallowed by the forward flow at {t}")
    return out
