"""Right-hand sides of the single-excitation amplitude equations.

Three systems are provided:

* the full transducer (free-field modes, ring cavity, spin classes,
  microwave cavity, qubit);
* the three-mode microwave transfer (collective spin s, cavity c, qubit q);
* the collective EIT storage system for a homogeneous ensemble.

Each has a compiled kernel ``kernel(t, x, args, tref, out)`` writing dx/dt
into ``out`` for a flat complex state vector. ``tref`` selects the active
schedule segment; see :func:`spintransducer.control.channel_value`. The
:class:`System` wrappers bundle a kernel with its packed arguments and the
flat-vector layout, and are what :func:`spintransducer.integrator.integrate`
consumes.

The ring-cavity mirror loss γ_co is carried by the explicit free-field
modes when a field grid is present. Without a grid (``n_modes = 0``) the
modes are eliminated in the Markov limit: u decays at γ_co/2 and is driven
by the flux-normalized input amplitude on the ``phi_in`` channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .control import (DELTA_C, DELTA_Q, KAPPA_GATE, OMEGA, OMEGA_PHASE, PHI_IN, Schedule,
                      channel_value)
from .model import Ensemble, FieldGrid, PhysicalParams


# ---------------------------------------------------------------------------
# state containers


@dataclass
class MwState:
    s: complex = 0j
    c: complex = 0j
    q: complex = 0j

    def to_vector(self) -> np.ndarray:
        return np.array([self.s, self.c, self.q], dtype=np.complex128)

    @classmethod
    def from_vector(cls, x) -> "MwState":
        return cls(complex(x[0]), complex(x[1]), complex(x[2]))


@dataclass(frozen=True)
class Layout:
    """Slices of the flat vector [η+, η-, u, v, a_1..a_M, s_1..s_M, c, q]."""

    n_modes: int
    n_classes: int
    has_mw: bool = True

    @property
    def size(self) -> int:
        return 2 * self.n_modes + 2 + 2 * self.n_classes + (2 if self.has_mw else 0)

    @property
    def eta_plus(self):
        return slice(0, self.n_modes)

    @property
    def eta_minus(self):
        return slice(self.n_modes, 2 * self.n_modes)

    @property
    def u(self):
        return 2 * self.n_modes

    @property
    def v(self):
        return 2 * self.n_modes + 1

    @property
    def a(self):
        o = 2 * self.n_modes + 2
        return slice(o, o + self.n_classes)

    @property
    def s(self):
        o = 2 * self.n_modes + 2 + self.n_classes
        return slice(o, o + self.n_classes)

    @property
    def c(self):
        return 2 * self.n_modes + 2 + 2 * self.n_classes

    @property
    def q(self):
        return 2 * self.n_modes + 3 + 2 * self.n_classes

    def populations(self, states: np.ndarray) -> dict[str, np.ndarray]:
        p = np.abs(np.atleast_2d(states)) ** 2
        zero = np.zeros(p.shape[0])
        return {
            "spin": p[:, self.s].sum(axis=1),
            "excited": p[:, self.a].sum(axis=1),
            "cavity": p[:, self.c] if self.has_mw else zero,
            "qubit": p[:, self.q] if self.has_mw else zero,
            "optical": p[:, :2 * self.n_modes + 2].sum(axis=1),
            "norm": p.sum(axis=1),
        }


@dataclass
class AmplitudeState:
    eta_plus: np.ndarray
    eta_minus: np.ndarray
    u: complex
    v: complex
    a_cls: np.ndarray
    s_cls: np.ndarray
    c: complex = 0j
    q: complex = 0j

    @classmethod
    def zeros(cls, n_modes: int, n_classes: int) -> "AmplitudeState":
        z = lambda n: np.zeros(n, dtype=np.complex128)  # noqa: E731
        return cls(z(n_modes), z(n_modes), 0j, 0j, z(n_classes), z(n_classes))

    @property
    def layout(self) -> Layout:
        return Layout(len(self.eta_plus), len(self.a_cls))

    def to_vector(self) -> np.ndarray:
        lay = self.layout
        x = np.zeros(lay.size, dtype=np.complex128)
        x[lay.eta_plus] = self.eta_plus
        x[lay.eta_minus] = self.eta_minus
        x[lay.u] = self.u
        x[lay.v] = self.v
        x[lay.a] = self.a_cls
        x[lay.s] = self.s_cls
        x[lay.c] = self.c
        x[lay.q] = self.q
        return x

    @classmethod
    def from_vector(cls, x, layout: Layout) -> "AmplitudeState":
        x = np.asarray(x, dtype=np.complex128)
        return cls(
            x[layout.eta_plus].copy(), x[layout.eta_minus].copy(), complex(x[layout.u]), complex(x[layout.v]),
            x[layout.a].copy(), x[layout.s].copy(),
            complex(x[layout.c]) if layout.has_mw else 0j,
            complex(x[layout.q]) if layout.has_mw else 0j,
        )


def norm2(x) -> float:
    """Total excitation probability Σ|amplitude|²."""
    if isinstance(x, (AmplitudeState, MwState)):
        x = x.to_vector()
    return float(np.sum(np.abs(np.asarray(x)) ** 2))


# ---------------------------------------------------------------------------
# compiled kernels

# full-system real parameters
_G, _GA, _GS, _GE, _GCO, _GCMU, _KOPT, _GCOI, _MARKOV = range(9)


@njit(cache=True)
def full_kernel(t, x, args, tref, out):
    rp, dl, cls, xij, tab, dflt = args
    gj = cls[0]
    kj = cls[1]
    dab = cls[2]
    dsb = cls[3]
    n = dl.size
    m = gj.size
    iu = 2 * n
    iv = iu + 1
    ia = iv + 1
    isp = ia + m
    ic = isp + m
    iq = ic + 1
    G = rp[_G]
    kopt = rp[_KOPT]
    dq = channel_value(tab, dflt, DELTA_Q, t, tref)
    dc = channel_value(tab, dflt, DELTA_C, t, tref)
    om0 = channel_value(tab, dflt, OMEGA, t, tref)
    phase = channel_value(tab, dflt, OMEGA_PHASE, t, tref)
    gate = channel_value(tab, dflt, KAPPA_GATE, t, tref)
    om = om0 * (math.cos(phase) + 1j * math.sin(phase))
    omc = om.conjugate()
    u = x[iu]
    v = x[iv]
    c = x[ic]
    q = x[iq]

    sum_ep = 0j
    sum_em = 0j
    for l in range(n):
        out[l] = -1j * dl[l] * x[l] - 1j * kopt * u
        out[n + l] = -1j * dl[l] * x[n + l] - 1j * kopt * v
        sum_ep += x[l]
        sum_em += x[n + l]

    sum_ga = 0j
    sum_gxa = 0j
    sum_ks = 0j
    for j in range(m):
        a = x[ia + j]
        s = x[isp + j]
        sum_ga += gj[j] * a
        sum_gxa += gj[j] * xij[j] * a
        sum_ks += kj[j] * s
        out[ia + j] = (-(1j * dab[j] + 0.5 * rp[_GA]) * a - 1j * om * s
                       - 1j * gj[j] * (u + xij[j].conjugate() * v))
        out[isp + j] = -(1j * dsb[j] + 0.5 * rp[_GS]) * s - 1j * omc * a - 1j * gate * kj[j] * c

    du = -1j * sum_ga - 1j * kopt * sum_ep - 0.5 * rp[_GCOI] * u
    dv = -1j * sum_gxa - 1j * kopt * sum_em - 0.5 * rp[_GCOI] * v
    if rp[_MARKOV] != 0.0:
        gco = rp[_GCO]
        du += -0.5 * gco * u - 1j * math.sqrt(gco) * channel_value(tab, dflt, PHI_IN, t, tref)
        dv += -0.5 * gco * v
    out[iu] = du
    out[iv] = dv
    out[ic] = -(1j * dc + 0.5 * rp[_GCMU]) * c - 1j * gate * sum_ks - 1j * G * q
    out[iq] = -(1j * dq + 0.5 * rp[_GE]) * q - 1j * G * c


@njit(cache=True)
def mw_kernel(t, x, args, tref, out):
    rp, dl, cls, xij, tab, dflt = args
    kn = rp[0]
    G = rp[1]
    dq = channel_value(tab, dflt, DELTA_Q, t, tref)
    dc = channel_value(tab, dflt, DELTA_C, t, tref)
    gate = channel_value(tab, dflt, KAPPA_GATE, t, tref)
    s = x[0]
    c = x[1]
    q = x[2]
    out[0] = -1j * gate * kn * c
    out[1] = -(1j * dc + 0.5 * rp[2]) * c - 1j * gate * kn * s - 1j * G * q
    out[2] = -(1j * dq + 0.5 * rp[3]) * q - 1j * G * c


# EIT real parameters
_EG, _EGA, _EGS, _EGCO, _EKOPT, _EXR, _EXI, _EDAB, _EDSB, _EGCOI, _EMARKOV = range(11)


@njit(cache=True)
def eit_kernel(t, x, args, tref, out):
    rp, dl, cls, xij, tab, dflt = args
    n = dl.size
    iu = 2 * n
    g = rp[_EG]
    kopt = rp[_EKOPT]
    xi = rp[_EXR] + 1j * rp[_EXI]
    om0 = channel_value(tab, dflt, OMEGA, t, tref)
    phase = channel_value(tab, dflt, OMEGA_PHASE, t, tref)
    om = om0 * (math.cos(phase) + 1j * math.sin(phase))
    u = x[iu]
    v = x[iu + 1]
    a = x[iu + 2]
    s = x[iu + 3]
    sum_ep = 0j
    sum_em = 0j
    for l in range(n):
        sum_ep += x[l]
        sum_em += x[n + l]
        out[l] = -1j * dl[l] * x[l] - 1j * kopt * u
        out[n + l] = -1j * dl[l] * x[n + l] - 1j * kopt * v
    du = -1j * g * a - 1j * kopt * sum_ep - 0.5 * rp[_EGCOI] * u
    dv = -1j * g * xi * a - 1j * kopt * sum_em - 0.5 * rp[_EGCOI] * v
    if rp[_EMARKOV] != 0.0:
        du += -0.5 * rp[_EGCO] * u - 1j * math.sqrt(rp[_EGCO]) * channel_value(tab, dflt, PHI_IN, t, tref)
        dv += -0.5 * rp[_EGCO] * v
    out[iu] = du
    out[iu + 1] = dv
    out[iu + 2] = -(1j * rp[_EDAB] + 0.5 * rp[_EGA]) * a - 1j * (om * s + g * u) - 1j * g * xi.conjugate() * v
    out[iu + 3] = -(1j * rp[_EDSB] + 0.5 * rp[_EGS]) * s - 1j * om.conjugate() * a


MW = 0
FULL = 1
EIT = 2


@njit(cache=True)
def rhs_dispatch(kind, t, x, args, tref, out):
    if kind == MW:
        mw_kernel(t, x, args, tref, out)
    elif kind == FULL:
        full_kernel(t, x, args, tref, out)
    else:
        eit_kernel(t, x, args, tref, out)


# ---------------------------------------------------------------------------
# systems


@dataclass(eq=False)
class System:
    """A compiled right-hand side bound to its parameters.

    ``args`` always has the shape ``(rp, dl, cls, xi, table, defaults)`` so
    that a single compiled stepper serves every kernel.
    """

    kind: int
    args: tuple
    layout: Optional[Layout]
    size: int
    schedule: Schedule
    name: str = ""

    def rhs(self, t: float, x: np.ndarray, tref: Optional[float] = None) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.complex128)
        rhs_dispatch(self.kind, float(t), np.ascontiguousarray(x, dtype=np.complex128), self.args,
                     float(t if tref is None else tref), out)
        return out

    def populations(self, states: np.ndarray) -> dict[str, np.ndarray]:
        if self.layout is not None:
            return self.layout.populations(states)
        p = np.abs(np.atleast_2d(states)) ** 2
        zero = np.zeros(p.shape[0])
        return {"spin": p[:, 0], "excited": zero, "cavity": p[:, 1], "qubit": p[:, 2],
                "optical": zero, "norm": p.sum(axis=1)}


def _sched_args(schedule: Schedule):
    return np.ascontiguousarray(schedule.table), np.ascontiguousarray(schedule.default_array)


_NO_MODES = np.zeros(0)
_NO_CLASSES = np.zeros((4, 0))
_NO_XI = np.zeros(0, dtype=np.complex128)


def mw_system(params: PhysicalParams, schedule: Schedule) -> System:
    rp = np.array([params.kappa_coll, params.G, params.gamma_cmu, params.gamma_e], dtype=np.float64)
    tab, dflt = _sched_args(schedule)
    return System(MW, (rp, _NO_MODES, _NO_CLASSES, _NO_XI, tab, dflt), None, 3, schedule, "mw")


def full_system(params: PhysicalParams, ensemble: Ensemble, grid: Optional[FieldGrid],
                schedule: Schedule) -> System:
    """Full amplitude equations; ``grid=None`` selects the Markov input-output form."""
    if grid is None:
        dl = np.zeros(0)
        kopt = 0.0
        markov = 1.0
    else:
        dl = np.ascontiguousarray(grid.detunings, dtype=np.float64)
        kopt = grid.coupling
        markov = 0.0
    rp = np.array([params.G, params.gamma_a, params.gamma_s, params.gamma_e, params.gamma_co,
                   params.gamma_cmu, kopt, params.gamma_co_int, markov], dtype=np.float64)
    f = lambda a, dt=np.float64: np.ascontiguousarray(a, dtype=dt)  # noqa: E731
    tab, dflt = _sched_args(schedule)
    cls = f(np.vstack([ensemble.class_g, ensemble.class_kappa, ensemble.class_delta_ab,
                       ensemble.class_delta_sb]))
    args = (rp, dl, cls, f(ensemble.class_xi, np.complex128), tab, dflt)
    layout = Layout(len(dl), ensemble.n_classes)
    return System(FULL, args, layout, layout.size, schedule, "full")


def eit_system(params: PhysicalParams, grid: Optional[FieldGrid], schedule: Schedule,
               xi: complex = 0j) -> System:
    if grid is None:
        dl = np.zeros(0)
        kopt = 0.0
        markov = 1.0
    else:
        dl = np.ascontiguousarray(grid.detunings, dtype=np.float64)
        kopt = grid.coupling
        markov = 0.0
    xi = complex(xi)
    rp = np.array([params.g_coll, params.gamma_a, params.gamma_s, params.gamma_co, kopt, xi.real, xi.imag,
                   params.delta_ab_static, params.delta_sb_static, params.gamma_co_int, markov],
                  dtype=np.float64)
    tab, dflt = _sched_args(schedule)
    layout = Layout(len(dl), 1, has_mw=False)
    return System(EIT, (rp, dl, _NO_CLASSES, _NO_XI, tab, dflt), layout, layout.size, schedule, "eit")


# ---------------------------------------------------------------------------
# state-level API


def mw_rhs(t: float, x: MwState, params: PhysicalParams, schedule: Schedule) -> MwState:
    return MwState.from_vector(mw_system(params, schedule).rhs(t, x.to_vector()))


def full_rhs(t: float, x: AmplitudeState, params: PhysicalParams, ensemble: Ensemble,
             grid: Optional[FieldGrid], schedule: Schedule) -> AmplitudeState:
    lay = x.layout
    n_grid = 0 if grid is None else grid.n_modes
    if lay.n_modes != n_grid or lay.n_classes != ensemble.n_classes:
        raise ValueError(f"state has {lay.n_modes} modes / {lay.n_classes} classes, "
                         f"system has {n_grid} / {ensemble.n_classes}")
    sys = full_system(params, ensemble, grid, schedule)
    return AmplitudeState.from_vector(sys.rhs(t, x.to_vector()), lay)


def eit_rhs(t: float, x: AmplitudeState, params: PhysicalParams, grid: Optional[FieldGrid],
            schedule: Schedule, xi: complex = 0j) -> AmplitudeState:
    """Collective EIT equations for a single homogeneous class.

    The returned derivative has ``c = q = 0``; the microwave sector is not
    part of this system.
    """
    if len(x.a_cls) != 1 or len(x.s_cls) != 1:
        raise ValueError("eit_rhs handles a single homogeneous class; use full_rhs for n_classes > 1")
    lay = x.layout
    eit_lay = Layout(lay.n_modes, 1, has_mw=False)
    sys = eit_system(params, grid, schedule, xi)
    vec = x.to_vector()[:eit_lay.size]
    d = AmplitudeState.from_vector(sys.rhs(t, vec), eit_lay)
    return d
