"""Time-dependent controls: detuning sweeps, stepwise pulse sequences, the
sech input photon and the impedance-matched storage pulse.

A :class:`Schedule` is plain data: a list of :class:`Segment` objects, one
set per control channel, plus a default value per channel that applies
wherever no segment is active. The same table is evaluated from Python and
from the compiled right-hand sides in :mod:`spintransducer.dynamics`.

All frequencies are angular frequencies in units of ``G``; times are in
units of ``1/G``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from numba import njit

# channel indices (shared with the compiled kernels)
DELTA_Q = 0
DELTA_C = 1
OMEGA = 2
OMEGA_PHASE = 3
KAPPA_GATE = 4
PHI_IN = 5
N_CHANNELS = 6

CHANNEL_NAMES = ("delta_Q", "Delta_c", "omega", "omega_phase", "kappa_gate", "phi_in")

# segment kinds
CONSTANT = 0
LINEAR = 1
IMPEDANCE_MATCHED = 2
SECH = 3

KIND_NAMES = ("constant", "linear", "impedance-matched", "sech")

# Ω₀ for t > center + PULSE_CUTOFF*T is treated as zero; sech(2*10) < 5e-9
PULSE_CUTOFF = 10.0


@njit(cache=True)
def matched_cos_theta(t, center, T, gamma_co):
    # sech(x)/sqrt(1+tanh x) == sqrt(2)/sqrt(1+exp(2x)), stable for all x
    x = 2.0 * (t - center) / T
    if x > 350.0:
        return 0.0
    return 2.0 / math.sqrt(gamma_co * T) / math.sqrt(1.0 + math.exp(2.0 * x))


@njit(cache=True)
def _row_value(tab, r, t):
    kind = tab[r, 3]
    if kind == 0.0:
        return tab[r, 4]
    if kind == 1.0:
        t0 = tab[r, 1]
        t1 = tab[r, 2]
        mid = 0.5 * (t0 + t1)
        half = 0.5 * (t1 - t0)
        return 0.5 * (tab[r, 4] + tab[r, 5]) + 0.5 * (tab[r, 5] - tab[r, 4]) * (t - mid) / half
    if kind == 2.0:
        c = matched_cos_theta(t, tab[r, 4], tab[r, 5], tab[r, 6])
        return tab[r, 7] * c / math.sqrt(1.0 - c * c)
    x = 2.0 * (t - tab[r, 4]) / tab[r, 5]
    if abs(x) > 700.0:
        return 0.0
    return tab[r, 6] / math.cosh(x)


@njit(cache=True)
def channel_value(tab, defaults, ch, t, tref):
    """Value of channel ``ch`` at ``t``; the active row is chosen with ``tref``.

    Rows are selected right-continuously (t0 <= tref < t1); a row whose end
    coincides with ``tref`` is used only if no row starts there.
    """
    for r in range(tab.shape[0]):
        if tab[r, 0] == ch and tab[r, 1] <= tref and tref < tab[r, 2]:
            return _row_value(tab, r, t)
    for r in range(tab.shape[0]):
        if tab[r, 0] == ch and tab[r, 1] < tref and tref <= tab[r, 2]:
            return _row_value(tab, r, t)
    return defaults[ch]


@dataclass(frozen=True)
class Segment:
    """One piece of a piecewise control on ``[t0, t1)``.

    ``params`` by kind: constant ``(value,)``; linear ``(v0, v1)``;
    impedance-matched ``(center, T, gamma_co, g_coll)``; sech
    ``(center, T, amplitude)``.
    """

    channel: str
    kind: str
    t0: float
    t1: float
    params: tuple[float, ...]

    def __post_init__(self):
        if self.channel not in CHANNEL_NAMES:
            raise ValueError(f"unknown channel {self.channel!r}; expected one of {CHANNEL_NAMES}")
        if self.kind not in KIND_NAMES:
            raise ValueError(f"unknown segment type {self.kind!r}; expected one of {KIND_NAMES}")
        if not self.t1 > self.t0:
            raise ValueError(f"segment must have t1 > t0, got [{self.t0}, {self.t1}]")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def row(self) -> list[float]:
        p = list(self.params) + [0.0] * (4 - len(self.params))
        return [float(CHANNEL_NAMES.index(self.channel)), self.t0, self.t1,
                float(KIND_NAMES.index(self.kind))] + p[:4]

    def shifted(self, dt: float) -> "Segment":
        params = self.params
        if self.kind in ("impedance-matched", "sech"):
            params = (params[0] + dt,) + params[1:]
        return replace(self, t0=self.t0 + dt, t1=self.t1 + dt, params=params)


_DEFAULTS = {"delta_Q": 0.0, "Delta_c": 0.0, "omega": 0.0, "omega_phase": 0.0,
             "kappa_gate": 1.0, "phi_in": 0.0}


@dataclass(frozen=True)
class Schedule:
    """Piecewise controls δ_Q(t), Δ_c(t), Ω(t) (plus gating and input drive)."""

    t_span: tuple[float, float]
    segments: tuple[Segment, ...] = ()
    defaults: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        t0, t1 = map(float, self.t_span)
        if not (math.isfinite(t0) and math.isfinite(t1)) or t1 < t0:
            raise ValueError(f"invalid t_span {self.t_span}")
        object.__setattr__(self, "t_span", (t0, t1))
        object.__setattr__(self, "segments", tuple(self.segments))
        merged = dict(_DEFAULTS)
        for k, v in dict(self.defaults).items():
            if k not in merged:
                raise ValueError(f"unknown channel {k!r}")
            merged[k] = float(v)
        object.__setattr__(self, "defaults", merged)
        table = np.array([s.row() for s in self.segments], dtype=np.float64).reshape(-1, 8)
        object.__setattr__(self, "_table", table)
        dflt = np.array([merged[c] for c in CHANNEL_NAMES], dtype=np.float64)
        object.__setattr__(self, "_default_array", dflt)

    # evaluation ----------------------------------------------------------
    @property
    def table(self) -> np.ndarray:
        return self._table

    @property
    def default_array(self) -> np.ndarray:
        return self._default_array

    def value(self, channel: str, t):
        ch = CHANNEL_NAMES.index(channel)
        if np.ndim(t) == 0:
            return channel_value(self._table, self._default_array, ch, float(t), float(t))
        t = np.asarray(t, dtype=float)
        return np.array([channel_value(self._table, self._default_array, ch, ti, ti) for ti in t.ravel()]).reshape(t.shape)

    def delta_Q(self, t):
        return self.value("delta_Q", t)

    def Delta_c(self, t):
        return self.value("Delta_c", t)

    def omega_ctrl(self, t):
        """Complex control Rabi frequency Ω₀(t)·exp(iφ)."""
        return self.value("omega", t) * np.exp(1j * self.value("omega_phase", t))

    # structure -----------------------------------------------------------
    @property
    def breakpoints(self) -> list[float]:
        """Every segment boundary strictly inside ``t_span``."""
        a, b = self.t_span
        pts = {s.t0 for s in self.segments} | {s.t1 for s in self.segments}
        return sorted(p for p in pts if a < p < b)

    @property
    def switch_times(self) -> list[float]:
        """Interior times where any control jumps."""
        out = []
        for p in self.breakpoints:
            for ch in CHANNEL_NAMES:
                i = CHANNEL_NAMES.index(ch)
                left = channel_value(self._table, self._default_array, i, p, math.nextafter(p, -math.inf))
                right = channel_value(self._table, self._default_array, i, p, p)
                if abs(left - right) > 1e-12 * max(1.0, abs(left), abs(right)):
                    out.append(p)
                    break
        return out

    def shifted(self, dt: float) -> "Schedule":
        return Schedule((self.t_span[0] + dt, self.t_span[1] + dt),
                        tuple(s.shifted(dt) for s in self.segments), self.defaults)

    def with_span(self, t_span) -> "Schedule":
        return Schedule(t_span, self.segments, self.defaults)

    def extended(self, segments: Sequence[Segment] = (), **defaults) -> "Schedule":
        merged = dict(self.defaults)
        merged.update(defaults)
        return Schedule(self.t_span, self.segments + tuple(segments), merged)

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "t_span": list(self.t_span),
            "defaults": dict(self.defaults),
            "segments": [
                {"channel": s.channel, "type": s.kind, "t0": s.t0, "t1": s.t1, "params": list(s.params)}
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Schedule":
        segs = tuple(
            Segment(d["channel"], d["type"], float(d["t0"]), float(d["t1"]), tuple(d.get("params", ())))
            for d in data.get("segments", ())
        )
        return cls(tuple(data["t_span"]), segs, dict(data.get("defaults", {})))


def constant_schedule(t_span, **values) -> Schedule:
    return Schedule(t_span, (), values)


def linear_sweep(sweep_range: float, T: float, which: str, params=None) -> Schedule:
    """Sweep δ_Q ("qubit") or Δ_c ("cavity") linearly from -range/2 to +range/2
    over ``[0, T]``. The other detuning is held at its static value from
    ``params`` (0 if no params are given).
    """
    if not T > 0:
        raise ValueError(f"sweep duration must be positive, got T={T}")
    channel = {"qubit": "delta_Q", "cavity": "Delta_c"}.get(which)
    if channel is None:
        raise ValueError(f"which must be 'qubit' or 'cavity', got {which!r}")
    defaults = {}
    if params is not None:
        defaults = {"delta_Q": params.delta_Q_static, "Delta_c": params.Delta_c_static}
    seg = Segment(channel, "linear", 0.0, float(T), (-sweep_range / 2.0, sweep_range / 2.0))
    return Schedule((0.0, float(T)), (seg,), defaults)


def staggered_pi_durations(G: float, kappa_coll: float, scale: float = 1.0) -> tuple[float, float]:
    if not (G > 0 and kappa_coll > 0):
        raise ValueError("staggered π-pulses need G > 0 and kappa_coll > 0")
    return scale * math.pi / (2.0 * kappa_coll), scale * math.pi / (2.0 * G)


def staggered_pi(params, detuning: float = 50.0, scale: float = 1.0) -> Schedule:
    """Two resonant exchanges: spin→cavity with the qubit parked at
    ``detuning``, then cavity→qubit with the cavity moved to ``detuning``.

    Phase 1 lasts π/(2κ√N) with Δ_c = 0, δ_Q = detuning; phase 2 lasts
    π/(2G) with Δ_c = δ_Q = detuning, which leaves the spin off resonance.
    ``scale`` multiplies both durations (pulse-area error studies).
    """
    t1, t2 = staggered_pi_durations(params.G, params.kappa_coll, scale)
    end = t1 + t2
    segs = (
        Segment("Delta_c", "constant", 0.0, t1, (0.0,)),
        Segment("delta_Q", "constant", 0.0, t1, (detuning,)),
        Segment("Delta_c", "constant", t1, end, (detuning,)),
        Segment("delta_Q", "constant", t1, end, (detuning,)),
    )
    return Schedule((0.0, end), segs, {"delta_Q": detuning, "Delta_c": detuning})


# photon envelope and storage pulse -----------------------------------------------

@dataclass(frozen=True)
class PhotonEnvelope:
    """Hyperbolic-secant single-photon envelope ∝ sech(2(t - center)/T)."""

    T: float
    center: float = 0.0
    shape: str = "sech"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"photon duration must be positive, got T={self.T}")
        if self.shape != "sech":
            raise ValueError(f"unsupported envelope shape {self.shape!r}")


def sech_envelope(env: PhotonEnvelope, t, grid=None):
    """Input amplitude at the coupling mirror.

    Without a grid the envelope is flux-normalized, ∫|Φ|² dt = 1. With a
    field grid it carries the √(L/c) = √(2π/spacing) factor so that
    (spacing/2π)∫|Φ|² dt = 1 over one recurrence period of the grid.
    """
    t = np.asarray(t, dtype=float)
    x = 2.0 * (t - env.center) / env.T
    amp = 1.0 / np.sqrt(env.T)
    if grid is not None:
        amp *= np.sqrt(2.0 * np.pi / grid.spacing)
    with np.errstate(over="ignore"):
        return amp / np.cosh(x)


def project_photon(env: PhotonEnvelope, grid) -> np.ndarray:
    """Free-field amplitudes η_l(0) whose mirror field Σ_l η_l e^{-iΔ_l t}
    reproduces the sech envelope (closed-form Fourier transform)."""
    d = grid.detunings
    coeff = grid.spacing / (2.0 * np.pi) * np.sqrt(2.0 * np.pi / (grid.spacing * env.T)) * (np.pi * env.T / 2.0)
    with np.errstate(over="ignore"):
        return coeff / np.cosh(np.pi * d * env.T / 4.0) * np.exp(1j * d * env.center)


def impedance_matched_cos_theta(t, T: float, gamma_co: float, center: float = 0.0):
    """cos Θ(t) of the impedance-matched storage pulse for a sech photon."""
    if not gamma_co * T > 4.0:
        raise ValueError(
            f"impedance matching needs gamma_co*T > 4 (cos Θ(-inf) = 2/sqrt(gamma_co*T) < 1), got {gamma_co * T:g}"
        )
    t = np.asarray(t, dtype=float)
    x = 2.0 * (t - center) / T
    with np.errstate(over="ignore"):
        return 2.0 / np.sqrt(gamma_co * T) / np.sqrt(1.0 + np.exp(2.0 * x))


def impedance_matched_control(T: float, gamma_co: float, g_coll: float, center: float = 0.0) -> Callable:
    """Control amplitude Ω₀(t) = g√N·cosΘ/sinΘ for the matched storage pulse.

    Raises ``ValueError`` unless gamma_co*T > 4.
    """
    impedance_matched_cos_theta(0.0, T, gamma_co)  # precondition check

    def omega0(t):
        c = impedance_matched_cos_theta(t, T, gamma_co, center)
        return g_coll * c / np.sqrt(1.0 - c * c)

    return omega0


def storage_segments(t_start: float, t_stop: float, env: PhotonEnvelope, gamma_co: float,
                     g_coll: float, drive: bool = False) -> tuple[Segment, ...]:
    """Segments for the EIT storage window: matched Ω₀ on [t_start, t_stop).

    With ``drive`` the flux-normalized input amplitude is added on the
    ``phi_in`` channel (used by the input-output, gridless formulation).
    """
    impedance_matched_cos_theta(0.0, env.T, gamma_co)
    segs = [Segment("omega", "impedance-matched", t_start, t_stop, (env.center, env.T, gamma_co, g_coll))]
    if drive:
        segs.append(Segment("phi_in", "sech", t_start, t_stop, (env.center, env.T, 1.0 / math.sqrt(env.T))))
    return tuple(segs)
