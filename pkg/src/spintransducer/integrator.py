"""Time stepping for the amplitude equations.

Two explicit schemes share one driver: the Dormand–Prince 5(4) embedded
pair with adaptive steps (default) and classical fixed-step RK4 (kept for
convergence studies). Integration is split at every schedule breakpoint so
that control discontinuities always fall on step boundaries. Steps are also
clipped to land exactly on the requested recording times, so no dense-output
interpolation is involved.

The largest frequency in any preset is Δ_c = 50 G against couplings of order
G; the problems are mildly stiff at most and explicit methods suffice.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .dynamics import System, rhs_dispatch

log = logging.getLogger(__name__)

METHODS = ("rk-adaptive-5(4)", "rk4-fixed")

# Dormand–Prince 5(4)
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])

OK = 0
STEP_UNDERFLOW = 1
NOT_FINITE = 2


class IntegrationError(RuntimeError):
    """Raised when a trajectory cannot be computed to the requested accuracy."""


@njit(cache=True)
def _eval(kind, args, t0, d, s, x, tref, out):
    # dx/ds with physical time t = t0 + d*s
    rhs_dispatch(kind, t0 + d * s, x, args, tref, out)
    if d < 0:
        for i in range(out.size):
            out[i] = -out[i]


@njit(cache=True)
def _dp54_segment(kind, args, t0, d, span, tref, x0, rtol, atol, h0, hmax, hmin, srec, A, B, E, C):
    n = x0.size
    nrec = srec.size
    rec = np.zeros((nrec, n), np.complex128)
    K = np.zeros((7, n), np.complex128)
    x = x0.copy()
    xs = np.empty(n, np.complex128)
    xn = np.empty(n, np.complex128)
    s = 0.0
    irec = 0
    while irec < nrec and srec[irec] <= 0.0:
        rec[irec] = x
        irec += 1
    _eval(kind, args, t0, d, s, x, tref, K[0])
    h = min(h0, hmax)
    nsteps = 0
    nrej = 0
    status = 0
    while s < span:
        target = span
        if irec < nrec and srec[irec] < target:
            target = srec[irec]
        if s + h >= target:
            hh = target - s
            hit = True
        else:
            hh = h
            hit = False
        for st in range(1, 6):
            for i in range(n):
                acc = x[i]
                for j in range(st):
                    acc += hh * A[st, j] * K[j, i]
                xs[i] = acc
            _eval(kind, args, t0, d, s + C[st] * hh, xs, tref, K[st])
        for i in range(n):
            acc = x[i]
            for j in range(6):
                acc += hh * B[j] * K[j, i]
            xn[i] = acc
        _eval(kind, args, t0, d, s + hh, xn, tref, K[6])
        err = 0.0
        finite = True
        for i in range(n):
            e = 0j
            for j in range(7):
                e += hh * E[j] * K[j, i]
            if not (math.isfinite(xn[i].real) and math.isfinite(xn[i].imag)):
                finite = False
            sc = atol + rtol * max(abs(x[i]), abs(xn[i]))
            err += (abs(e) / sc) ** 2
        if not finite:
            status = 2
            break
        err = math.sqrt(err / n)
        if err <= 1.0:
            s = target if hit else s + hh
            for i in range(n):
                x[i] = xn[i]
                K[0, i] = K[6, i]
            nsteps += 1
            while irec < nrec and srec[irec] <= s:
                rec[irec] = x
                irec += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if hit:
                # a clipped step says nothing bad about h; only let it grow
                h = min(hmax, max(h, hh * fac))
            else:
                h = min(hmax, hh * fac)
        else:
            nrej += 1
            h = hh * max(0.1, 0.9 * err ** -0.2)
            if h < hmin:
                status = 1
                break
    return rec, x, nsteps, nrej, h, status


@njit(cache=True)
def _rk4_segment(kind, args, t0, d, span, tref, x0, dt, srec):
    n = x0.size
    nrec = srec.size
    rec = np.zeros((nrec, n), np.complex128)
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    xs = np.empty(n, np.complex128)
    x = x0.copy()
    s = 0.0
    irec = 0
    while irec < nrec and srec[irec] <= 0.0:
        rec[irec] = x
        irec += 1
    nsteps = 0
    status = 0
    # nominal nodes i*h_nom; recording times only add extra boundaries
    h_nom = span / max(1, math.ceil(span / dt - 1e-9))
    while s < span:
        target = span
        if irec < nrec and srec[irec] < target:
            target = srec[irec]
        next_node = (math.floor(s / h_nom + 1e-9) + 1) * h_nom
        if next_node < target:
            target = next_node
        if target > span:
            target = span
        h = target - s
        _eval(kind, args, t0, d, s, x, tref, k1)
        for i in range(n):
            xs[i] = x[i] + 0.5 * h * k1[i]
        _eval(kind, args, t0, d, s + 0.5 * h, xs, tref, k2)
        for i in range(n):
            xs[i] = x[i] + 0.5 * h * k2[i]
        _eval(kind, args, t0, d, s + 0.5 * h, xs, tref, k3)
        for i in range(n):
            xs[i] = x[i] + h * k3[i]
        _eval(kind, args, t0, d, s + h, xs, tref, k4)
        for i in range(n):
            x[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not (math.isfinite(x[i].real) and math.isfinite(x[i].imag)):
                status = 2
        if status != 0:
            break
        s = target
        nsteps += 1
        while irec < nrec and srec[irec] <= s:
            rec[irec] = x
            irec += 1
    return rec, x, nsteps, 0, dt, status


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk-adaptive-5(4)"
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    dt: float = 1e-2
    max_step: float = math.inf
    n_records: int = 2001
    record_interval: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.n_records < 2 and self.record_interval is None:
            raise ValueError("n_records must be at least 2")

    def record_times(self, t_span) -> np.ndarray:
        a, b = t_span
        if self.record_interval is not None:
            n = int(math.floor((b - a) / self.record_interval + 1e-9))
            times = a + self.record_interval * np.arange(n + 1)
            if times[-1] < b:
                times = np.append(times, b)
            return times
        return np.linspace(a, b, self.n_records)


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    populations: dict
    final_state: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def channel(self, name: str) -> np.ndarray:
        return self.populations[name]

    def to_csv(self, unit_note: str = "time in units of 1/G") -> str:
        buf = io.StringIO()
        buf.write(f"# {unit_note}\n")
        buf.write("t,spin,cavity,qubit,optical,norm\n")
        p = self.populations
        cols = [self.times, p["spin"], p["cavity"], p["qubit"], p["optical"], p["norm"]]
        for row in zip(*cols):
            buf.write(",".join(f"{v:.12g}" for v in row) + "\n")
        return buf.getvalue()


def _segments(t_span, breakpoints):
    pts = [t_span[0]] + [p for p in breakpoints if t_span[0] < p < t_span[1]] + [t_span[1]]
    return list(zip(pts[:-1], pts[1:]))


def integrate(system: System, x0, schedule=None, config: IntegratorConfig = IntegratorConfig(),
              t_record=None, backward: bool = False) -> Trajectory:
    """Integrate ``system`` from ``x0`` over ``schedule.t_span``.

    ``schedule`` defaults to the one the system was built with and only
    its span and breakpoints are used here; the controls themselves are
    packed into ``system``. With ``backward=True`` the state ``x0`` is taken
    at the end of the span and propagated back to its start; the returned
    trajectory is still ordered by increasing time.
    """
    if schedule is None:
        schedule = system.schedule
    x0 = np.ascontiguousarray(x0, dtype=np.complex128)
    t_span = schedule.t_span
    if not all(math.isfinite(t) for t in t_span):
        raise ValueError("t_span must be finite")
    if x0.size != system.size:
        raise ValueError(f"x0 has size {x0.size}, system expects {system.size}")
    times = np.asarray(config.record_times(t_span) if t_record is None else t_record, dtype=float)
    if times.size and (times[0] < t_span[0] or times[-1] > t_span[1]):
        raise ValueError("record times must lie inside t_span")
    span = t_span[1] - t_span[0]
    hmin = 1e-14 * max(span, 1e-300)
    states = np.zeros((times.size, x0.size), dtype=np.complex128)
    x = x0.copy()
    h = None
    n_steps = n_rej = 0
    segs = _segments(t_span, schedule.breakpoints)
    d = 1.0
    if backward:
        segs = [(b, a) for a, b in reversed(segs)]
        d = -1.0
    filled = set()
    for k, (a, b) in enumerate(segs):
        last = k == len(segs) - 1
        lo, hi = min(a, b), max(a, b)
        # a record time on an interior boundary belongs to the segment reaching it first
        sel = (times >= lo) & (times <= hi)
        if not last:
            sel &= times != b
        idx = np.array([i for i in np.nonzero(sel)[0] if i not in filled], dtype=int)
        srec = np.ascontiguousarray(np.abs(times[idx] - a)) if idx.size else np.zeros(0)
        order = np.argsort(srec, kind="stable")
        srec = srec[order]
        tref = 0.5 * (a + b)
        seg_span = abs(b - a)
        if config.method == "rk4-fixed":
            rec, x, ns, nr, _, status = _rk4_segment(system.kind, system.args, a, d, seg_span, tref, x,
                                                     config.dt, srec)
        else:
            if h is None:
                h = _initial_step(system, a, seg_span, tref, x, config)
            rec, x, ns, nr, h, status = _dp54_segment(system.kind, system.args, a, d, seg_span, tref, x,
                                                      config.rel_tol, config.abs_tol, h,
                                                      min(config.max_step, seg_span), hmin, srec,
                                                      _A, _B, _E, _C)
        n_steps += ns
        n_rej += nr
        if status == STEP_UNDERFLOW:
            raise IntegrationError(f"step size underflow below {hmin:.3g} in segment [{lo:g}, {hi:g}]")
        if status == NOT_FINITE:
            raise IntegrationError(f"non-finite state encountered in segment [{lo:g}, {hi:g}]")
        if idx.size:
            states[idx[order]] = rec
            filled.update(idx.tolist())
    traj = Trajectory(times, states, system.populations(states), x, n_steps, n_rej)
    log.debug("integrated %d steps (%d rejected) over [%g, %g]", n_steps, n_rej, *t_span)
    return traj


def _initial_step(system: System, a, span, tref, x, config) -> float:
    f0 = system.rhs(a, x, tref)
    d0 = np.linalg.norm(x)
    d1 = np.linalg.norm(f0)
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return float(min(h, span, config.max_step))
