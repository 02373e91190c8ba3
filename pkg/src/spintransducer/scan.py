"""End-to-end protocol runs, 2-D fidelity scans and the protocol comparison.

A :class:`ProtocolRun` bundles the physics (:class:`PhysicalParams`,
:class:`EnsembleSpec`), a microwave-transfer :class:`Protocol` and the stage
to simulate. ``run_protocol`` turns it into schedules and systems, integrates
and reduces the qubit population to fidelity statistics.

Combined runs start from a sech photon. Storage lasts from 0 to
t₁ = center + 5 T_photon with the impedance-matched control and the spins
decoupled from the microwave cavity; at t₁ the control is off and the
microwave protocol starts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import control
from .analytics import asymptotic_stats
from .control import PhotonEnvelope, Schedule, Segment
from .dynamics import AmplitudeState, Layout, full_system, mw_system
from .integrator import IntegratorConfig, Trajectory, integrate
from .model import EnsembleSpec, PhysicalParams, build_ensemble, build_field_grid

log = logging.getLogger(__name__)

PROTOCOL_KINDS = ("qtune", "ctune", "stagpi", "idle")
STAGES = ("mw-only", "eit-only", "combined")
INITIAL = ("spin", "photon")
FIELD_MODELS = ("grid", "markov")
SCAN_AXES = ("delta_qk", "Delta_c", "Delta_ck", "delta_Q", "T", "kappa_coll")

# abort combined runs if storage leaves less than this in the spins
MIN_STORED = 1e-3
# fractional pulse-duration error defining the stag-pi min/max band
PULSE_AREA_ERROR = 0.01
T_MAX = 1e5


class ProtocolError(ValueError):
    """Raised for runs that cannot be carried out as specified."""


@dataclass(frozen=True)
class Protocol:
    """Microwave transfer step.

    ``qtune`` sweeps δ_Q over ``sweep_range`` (δ_qk) in time ``T`` with Δ_c
    held at its static value; ``ctune`` sweeps Δ_c over Δ_ck with δ_Q
    static; ``stagpi`` is the two-step resonant exchange with the idle
    detuning ``detuning`` and durations scaled by ``scale``; ``idle`` holds
    the static detunings for time ``T``.
    """

    kind: str = "qtune"
    sweep_range: float = 0.0
    T: float = 100.0
    detuning: float = 50.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise ProtocolError(f"protocol kind must be one of {PROTOCOL_KINDS}, got {self.kind!r}")
        if self.kind != "stagpi" and not self.T > 0:
            raise ProtocolError(f"protocol duration must be positive, got T={self.T}")
        if not self.scale > 0:
            raise ProtocolError("stag-pi scale must be positive")

    def schedule(self, params: PhysicalParams) -> Schedule:
        if self.kind == "qtune":
            return control.linear_sweep(self.sweep_range, self.T, "qubit", params)
        if self.kind == "ctune":
            return control.linear_sweep(self.sweep_range, self.T, "cavity", params)
        if self.kind == "stagpi":
            return control.staggered_pi(params, self.detuning, self.scale)
        return control.constant_schedule((0.0, self.T), delta_Q=params.delta_Q_static,
                                         Delta_c=params.Delta_c_static)

    def duration(self, params: PhysicalParams) -> float:
        if self.kind == "stagpi":
            return sum(control.staggered_pi_durations(params.G, params.kappa_coll, self.scale))
        return self.T


@dataclass(frozen=True)
class PhotonSettings:
    """Input photon and optical field model for storage.

    ``T`` is the sech duration parameter. With ``field = "grid"`` the
    photon is projected on ``n_modes`` free-field modes spanning
    ``bandwidth_factor / T``; ``n_modes = 0`` picks the smallest odd count
    (at least 201) whose recurrence time exceeds the whole run. ``markov``
    eliminates the field modes in favour of an input drive.
    """

    T: float = 10.0
    field: str = "grid"
    n_modes: int = 0
    bandwidth_factor: float = 40.0
    center_factor: float = 5.0
    end_factor: float = 5.0

    def __post_init__(self):
        if not self.T > 0:
            raise ProtocolError("photon duration must be positive")
        if self.field not in FIELD_MODELS:
            raise ProtocolError(f"field model must be one of {FIELD_MODELS}, got {self.field!r}")

    @property
    def center(self) -> float:
        return self.center_factor * self.T

    @property
    def t_store(self) -> float:
        """Storage→transfer handoff t₁."""
        return self.center + self.end_factor * self.T

    def envelope(self) -> PhotonEnvelope:
        return PhotonEnvelope(self.T, self.center)


@dataclass(frozen=True)
class ProtocolRun:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    protocol: Protocol = field(default_factory=Protocol)
    stage: str = "mw-only"
    initial: str = "spin"
    photon: PhotonSettings = field(default_factory=PhotonSettings)
    # evaluate |q|² at this time (measured from the start of the transfer step)
    eval_time: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ProtocolError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.initial not in INITIAL:
            raise ProtocolError(f"initial condition must be one of {INITIAL}, got {self.initial!r}")
        if self.stage == "mw-only" and self.initial != "spin":
            raise ProtocolError("mw-only runs start from the spin excitation (initial='spin')")
        if self.stage in ("combined", "eit-only") and self.initial != "photon":
            raise ProtocolError(f"{self.stage} runs start from the input photon (initial='photon')")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ensemble"]["disorder_xi"] = [self.ensemble.disorder_xi.real, self.ensemble.disorder_xi.imag]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolRun":
        ens = dict(d.get("ensemble", {}))
        xi = ens.get("disorder_xi", 0.0)
        if isinstance(xi, (list, tuple)):
            ens["disorder_xi"] = complex(xi[0], xi[1])
        return cls(
            params=PhysicalParams(**d.get("params", {})),
            ensemble=EnsembleSpec(**ens),
            protocol=Protocol(**d.get("protocol", {})),
            stage=d.get("stage", "mw-only"),
            initial=d.get("initial", "spin"),
            photon=PhotonSettings(**d.get("photon", {})),
            eval_time=d.get("eval_time"),
            name=d.get("name", ""),
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class FidelityStats:
    mean: float
    min: float
    max: float
    final: float
    # |q|² at eval_time, if one was requested
    at_eval: Optional[float] = None
    # spin population at the storage handoff (combined/eit-only runs)
    stored: Optional[float] = None
    # optical population at the handoff
    leakage: Optional[float] = None
    t_total: float = 0.0

    @property
    def headline(self) -> float:
        return self.at_eval if self.at_eval is not None else self.mean

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# building blocks


def combined_schedule(run: ProtocolRun) -> Schedule:
    """Storage window followed by the microwave protocol shifted to t₁."""
    p = run.params
    ph = run.photon
    t1 = ph.t_store
    mw = run.protocol.schedule(p)
    if run.stage == "eit-only":
        mw_segs: tuple = ()
        end = t1
    else:
        mw = mw.shifted(t1)
        mw_segs = mw.segments
        end = mw.t_span[1]
    env = ph.envelope()
    segs = control.storage_segments(0.0, t1, env, p.gamma_co, p.g_coll, drive=ph.field == "markov")
    segs += (Segment("kappa_gate", "constant", 0.0, t1, (0.0,)),)
    defaults = dict(mw.defaults)
    return Schedule((0.0, end), segs + tuple(mw_segs), defaults)


def _auto_modes(ph: PhotonSettings, duration: float) -> int:
    bandwidth = ph.bandwidth_factor / ph.T
    if ph.n_modes:
        return ph.n_modes
    # recurrence 2π(n-1)/B must exceed the run
    n = int(math.ceil(duration * bandwidth / (2.0 * math.pi))) + 2
    n = max(201, n)
    return n + 1 if n % 2 == 0 else n


def build_run(run: ProtocolRun):
    """(system, x0, schedule, layout, t_offset) for a run.

    ``t_offset`` is the start of the microwave step in run time.
    """
    p = run.params
    if run.stage == "mw-only":
        sched = run.protocol.schedule(p)
        if run.ensemble.n_classes == 1:
            sys = mw_system(p, sched)
            return sys, np.array([1, 0, 0], dtype=np.complex128), sched, None, 0.0
        ens = build_ensemble(run.ensemble, p)
        sys = full_system(p, ens, None, sched)
        lay = sys.layout
        x0 = np.zeros(lay.size, dtype=np.complex128)
        x0[lay.s] = ens.dicke_state()
        return sys, x0, sched, lay, 0.0
    sched = combined_schedule(run)
    ens = build_ensemble(run.ensemble, p)
    ph = run.photon
    if ph.field == "grid":
        n = _auto_modes(ph, sched.t_span[1] - sched.t_span[0])
        grid = build_field_grid(p.gamma_co, ph.bandwidth_factor / ph.T, n)
    else:
        grid = None
    sys = full_system(p, ens, grid, sched)
    lay = sys.layout
    x0 = np.zeros(lay.size, dtype=np.complex128)
    if grid is not None:
        x0[lay.eta_plus] = control.project_photon(ph.envelope(), grid)
    return sys, x0, sched, lay, ph.t_store


def _stats_from(run: ProtocolRun, traj: Trajectory, t_offset: float, stored=None, leakage=None) -> FidelityStats:
    q = traj.populations["qubit"]
    t = traj.times
    sel = t >= t_offset - 1e-12
    if run.protocol.kind == "stagpi" or run.stage == "eit-only":
        mean = mn = mx = float(q[-1])
    else:
        mean, mn, mx = asymptotic_stats(t[sel], q[sel])
    at_eval = None
    if run.eval_time is not None:
        at_eval = float(np.interp(t_offset + run.eval_time, t, q))
    return FidelityStats(mean, mn, mx, float(q[-1]), at_eval, stored, leakage, float(t[-1] - t[0]))


def run_protocol(run: ProtocolRun, config: IntegratorConfig = IntegratorConfig()):
    """Integrate ``run`` and return (Trajectory, FidelityStats).

    Sweeps report statistics of |q|² over the last 10% of the transfer
    step; stag-pi reports the final value, with min/max from ±1% pulse
    duration errors.
    """
    sys, x0, sched, lay, t_off = build_run(run)
    t_rec = None
    extra = []
    if run.eval_time is not None:
        extra.append(t_off + run.eval_time)
    if run.stage != "mw-only":
        extra.append(t_off)
    if extra:
        base = config.record_times(sched.t_span)
        t_rec = np.unique(np.concatenate([base, np.clip(extra, *sched.t_span)]))
    stored = leakage = None
    if run.stage != "mw-only":
        # storage first, so a failed absorption aborts before the long transfer
        store_sched = sched.with_span((sched.t_span[0], t_off))
        rec = t_rec[t_rec <= t_off] if t_rec is not None else None
        tr1 = integrate(sys, x0, store_sched, config, t_record=rec)
        stored = float(tr1.populations["spin"][-1])
        leakage = float(tr1.populations["optical"][-1])
        if stored <= MIN_STORED:
            raise ProtocolError(f"storage left only {stored:.3g} in the spin ensemble (< {MIN_STORED:g}); "
                                "no excitation to transfer")
        if run.stage == "eit-only":
            return tr1, FidelityStats(stored, stored, stored, stored, None, stored, leakage, t_off)
        tr2 = integrate(sys, tr1.final_state, sched.with_span((t_off, sched.t_span[1])), config,
                        t_record=t_rec[t_rec >= t_off])
        traj = _join(tr1, tr2)
    else:
        traj = integrate(sys, x0, sched, config, t_record=t_rec)
    stats = _stats_from(run, traj, t_off, stored, leakage)
    if run.protocol.kind == "stagpi":
        band = []
        for s in (1.0 - PULSE_AREA_ERROR, 1.0 + PULSE_AREA_ERROR):
            r = replace(run, protocol=replace(run.protocol, scale=run.protocol.scale * s))
            _, st = _run_plain(r, config)
            band.append(st.final)
        stats = replace(stats, min=min([stats.final] + band), max=max([stats.final] + band))
    return traj, stats


def _run_plain(run: ProtocolRun, config: IntegratorConfig):
    sys, x0, sched, lay, t_off = build_run(run)
    if run.stage == "mw-only":
        traj = integrate(sys, x0, sched, config, t_record=np.array(sched.t_span))
    else:
        rec = np.array([sched.t_span[0], t_off, sched.t_span[1]])
        traj = integrate(sys, x0, sched, config, t_record=rec)
    q = traj.populations["qubit"]
    return traj, FidelityStats(float(q[-1]), float(q[-1]), float(q[-1]), float(q[-1]))


def _join(a: Trajectory, b: Trajectory) -> Trajectory:
    keep = b.times > a.times[-1]
    times = np.concatenate([a.times, b.times[keep]])
    states = np.concatenate([a.states, b.states[keep]])
    pops = {k: np.concatenate([a.populations[k], b.populations[k][keep]]) for k in a.populations}
    return Trajectory(times, states, pops, b.final_state, a.n_steps + b.n_steps, a.n_rejected + b.n_rejected)


# ---------------------------------------------------------------------------
# scans


def apply_axis(run: ProtocolRun, name: str, value: float) -> ProtocolRun:
    """Return ``run`` with scan parameter ``name`` set to ``value``."""
    p, pr = run.params, run.protocol
    if name == "kappa_coll":
        return replace(run, params=replace(p, kappa_coll=float(value)))
    if name == "T":
        return replace(run, protocol=replace(pr, T=float(value)))
    if name == "delta_qk":
        if pr.kind != "qtune":
            raise ProtocolError("delta_qk is the qubit sweep range; the run is not a qtune protocol")
        return replace(run, protocol=replace(pr, sweep_range=float(value)))
    if name == "Delta_ck":
        if pr.kind != "ctune":
            raise ProtocolError("Delta_ck is the cavity sweep range; the run is not a ctune protocol")
        return replace(run, protocol=replace(pr, sweep_range=float(value)))
    if name == "Delta_c":
        if pr.kind == "ctune":
            raise ProtocolError("Delta_c is swept in a ctune protocol; scan Delta_ck instead")
        return replace(run, params=replace(p, Delta_c_static=float(value)))
    if name == "delta_Q":
        if pr.kind == "qtune":
            raise ProtocolError("delta_Q is swept in a qtune protocol; scan delta_qk instead")
        return replace(run, params=replace(p, delta_Q_static=float(value)))
    raise ProtocolError(f"unknown scan parameter {name!r}; supported: {', '.join(SCAN_AXES)}")


@dataclass(eq=False)
class ScanResult:
    axis1: tuple
    axis2: tuple
    fidelity_mean: np.ndarray
    fidelity_min: np.ndarray
    fidelity_max: np.ndarray
    metadata: dict

    def transposed(self) -> "ScanResult":
        return ScanResult(self.axis2, self.axis1, self.fidelity_mean.T.copy(), self.fidelity_min.T.copy(),
                          self.fidelity_max.T.copy(), dict(self.metadata))

    def to_csv(self) -> str:
        n1, v1 = self.axis1
        n2, v2 = self.axis2
        lines = [f"# {self.metadata.get('units_note', 'frequencies in units of G, times in units of 1/G')}",
                 f"{n1},{n2},mean,min,max"]
        for i, a in enumerate(v1):
            for j, b in enumerate(v2):
                lines.append(",".join(f"{x:.12g}" for x in (a, b, self.fidelity_mean[i, j],
                                                             self.fidelity_min[i, j], self.fidelity_max[i, j])))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "axis1": {"name": self.axis1[0], "values": list(map(float, self.axis1[1]))},
            "axis2": {"name": self.axis2[0], "values": list(map(float, self.axis2[1]))},
            "fidelity_mean": self.fidelity_mean.tolist(),
            "fidelity_min": self.fidelity_min.tolist(),
            "fidelity_max": self.fidelity_max.tolist(),
            "metadata": self.metadata,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def area_above(self, level: float) -> float:
        """Fraction of grid cells with mean fidelity above ``level``."""
        return float(np.mean(self.fidelity_mean > level))


def _cell(job):
    run, config = job
    _, st = run_protocol(run, config)
    return st.headline if run.eval_time is not None else st.mean, st.min, st.max


def run_scan(base: ProtocolRun, axis1: tuple[str, Sequence[float]], axis2: tuple[str, Sequence[float]],
             config: IntegratorConfig = IntegratorConfig(n_records=401), workers: int = 1,
             progress=None) -> ScanResult:
    """Fidelity statistics over a 2-D parameter grid.

    All parameter names are resolved before anything is integrated. Rows
    follow ``axis1``, columns ``axis2``.
    """
    n1, v1 = axis1[0], np.asarray(axis1[1], dtype=float)
    n2, v2 = axis2[0], np.asarray(axis2[1], dtype=float)
    if n1 == n2:
        raise ProtocolError(f"both scan axes are {n1!r}")
    if v1.size == 0 or v2.size == 0:
        raise ProtocolError("scan axes must be non-empty")
    jobs = []
    for a in v1:
        for b in v2:
            jobs.append((apply_axis(apply_axis(base, n1, a), n2, b), config))
    results = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for k, r in enumerate(ex.map(_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers)))):
                results.append(r)
                if progress:
                    progress(k + 1, len(jobs))
    else:
        for k, job in enumerate(jobs):
            results.append(_cell(job))
            if progress:
                progress(k + 1, len(jobs))
    arr = np.array(results, dtype=float).reshape(v1.size, v2.size, 3)
    meta = {"base": base.to_dict(), "integrator": asdict(config), "config_hash": base.config_hash(),
            "units_note": "frequencies in units of G, times in units of 1/G"}
    return ScanResult((n1, v1), (n2, v2), arr[..., 0], arr[..., 1], arr[..., 2], meta)


# ---------------------------------------------------------------------------
# protocol comparison


@dataclass(frozen=True)
class ComparisonRow:
    protocol: str
    T: Optional[float]
    mean: Optional[float]
    min: Optional[float]
    max: Optional[float]
    reachable: bool


def comparison_runs(coupling_ratio: float) -> dict[str, ProtocolRun]:
    """Base runs for the three protocols at κ√N = coupling_ratio·G."""
    from .presets import comparison_base

    return comparison_base(coupling_ratio)


def _mean_at(run: ProtocolRun, T: float, config: IntegratorConfig) -> FidelityStats:
    _, st = run_protocol(apply_axis(run, "T", T), config)
    return st


def minimal_time(run: ProtocolRun, target: float, config: IntegratorConfig,
                 T_lo: float = 1.0, rel_tol: float = 1e-2, T_max: float = T_MAX):
    """Smallest sweep time whose mean fidelity reaches ``target`` (bisection).

    The mean is not strictly monotone in T for oscillating sweeps; the
    search brackets the first crossing on a doubling ladder and bisects
    inside it. Returns (T, stats) or (None, None) if T_max is not enough.
    """
    lo = None
    T = T_lo
    st = _mean_at(run, T, config)
    while st.mean < target:
        lo = T
        T *= 2.0
        if T > T_max:
            st = _mean_at(run, T_max, config)
            if st.mean < target:
                return None, None
            T = T_max
            break
        st = _mean_at(run, T, config)
    if lo is None:
        return T, st
    hi, hi_st = T, st
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        s = _mean_at(run, mid, config)
        if s.mean >= target:
            hi, hi_st = mid, s
        else:
            lo = mid
    return hi, hi_st


def compare_protocols(coupling_ratio: float = 1.0, target_fidelity: float = 0.99,
                      config: IntegratorConfig = IntegratorConfig(n_records=801)) -> list[ComparisonRow]:
    """Minimal transfer time reaching ``target_fidelity`` for q-tune, c-tune and stag-pi.

    Stag-pi has no free duration; its time is the fixed two-pulse duration
    and it is reported unreachable if the nominal fidelity misses the target.
    """
    if not 0.0 <= target_fidelity < 1.0:
        raise ProtocolError("target fidelity must lie in [0, 1)")
    runs = comparison_runs(coupling_ratio)
    rows = []
    for name in ("qtune", "ctune", "stagpi"):
        run = runs[name]
        if target_fidelity == 0.0:
            rows.append(ComparisonRow(name, 0.0, None, None, None, True))
            continue
        if name == "stagpi":
            _, st = run_protocol(run, config)
            T = run.protocol.duration(run.params)
            ok = st.mean >= target_fidelity
            rows.append(ComparisonRow(name, T if ok else None, st.mean, st.min, st.max, ok))
            continue
        T, st = minimal_time(run, target_fidelity, config)
        if T is None:
            rows.append(ComparisonRow(name, None, None, None, None, False))
        else:
            rows.append(ComparisonRow(name, T, st.mean, st.min, st.max, True))
    return rows


def output_name(prefix: str, run: ProtocolRun, ext: str) -> str:
    return f"{prefix}-{run.config_hash()}.{ext}"


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
