"""Closed-form results and diagnostics used as oracles for the simulations.

Covers the resonant π-pulse solution and its mismatch bound, instantaneous
eigenvalues of the three-mode microwave Hamiltonian (exact and with the
cavity adiabatically eliminated), the adiabaticity margin, the collective
EIT dark-state amplitude for a given mixing angle, and a few bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .control import PhotonEnvelope, Schedule, sech_envelope


def pi_pulse_q(t, G: float, kappa_coll: float):
    """Qubit amplitude for resonant lossless transfer from s = 1.

    q(t) = -(2κG/Ω²) sin²(Ωt/2) with Ω = √(G² + κ²).
    """
    om2 = G * G + kappa_coll * kappa_coll
    om = math.sqrt(om2)
    return -(2.0 * kappa_coll * G / om2) * np.sin(0.5 * om * np.asarray(t, dtype=float)) ** 2 + 0j


def rabi_frequency(G: float, kappa_coll: float) -> float:
    return math.hypot(G, kappa_coll)


def mismatch_bound(G: float, kappa_coll: float) -> float:
    """Largest single-pulse qubit population (1 - ε²)², ε = |G - κ|/Ω."""
    om = math.hypot(G, kappa_coll)
    if om == 0:
        raise ValueError("mismatch bound needs G or kappa_coll nonzero")
    eps2 = (G - kappa_coll) ** 2 / om**2
    return (1.0 - eps2) ** 2


# ---------------------------------------------------------------------------
# eigenstructure of the microwave sector


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Eigenpairs of the (s, c, q) Hamiltonian, eigenvalues ascending.

    ``eigenvectors[:, j]`` belongs to ``eigenvalues[j]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    hamiltonian: np.ndarray


def mw_hamiltonian(delta_Q: float, Delta_c: float, G: float, kappa_coll: float) -> np.ndarray:
    return np.array([[0.0, kappa_coll, 0.0],
                     [kappa_coll, Delta_c, G],
                     [0.0, G, delta_Q]], dtype=np.complex128)


def eigs_full(delta_Q: float, Delta_c: float, G: float, kappa_coll: float) -> EigenDecomposition:
    H = mw_hamiltonian(delta_Q, Delta_c, G, kappa_coll)
    w, v = np.linalg.eigh(H)
    return EigenDecomposition(w, v, H)


def eigs_reduced(delta_Q: float, Delta_c: float, G: float, kappa_coll: float) -> tuple[float, float]:
    """Two spin/qubit branches with the cavity adiabatically eliminated.

    With κ̃ = Gκ/Δ_c the effective two-level Hamiltonian over (s, q) is
    [[-κ²/Δ_c, -κ̃], [-κ̃, δ_Q - G²/Δ_c]], whose eigenvalues are returned in
    ascending order. The Stark shifts enter with a negative sign for Δ_c > 0
    (level repulsion from the cavity above).
    """
    if Delta_c == 0:
        raise ValueError("adiabatic elimination needs Delta_c != 0")
    k2 = kappa_coll**2
    kt = G * kappa_coll / Delta_c
    dt = delta_Q - G * G / Delta_c + k2 / Delta_c
    root = math.sqrt(0.25 * dt * dt + kt * kt)
    base = -k2 / Delta_c + 0.5 * dt
    return base - root, base + root


def _gauge_fixed(v: np.ndarray) -> np.ndarray:
    out = v.copy()
    for j in range(v.shape[1]):
        col = v[:, j]
        k = int(np.argmax(np.abs(col)))
        out[:, j] = col * (abs(col[k]) / col[k])
    return out


def _eig_at(schedule: Schedule, t: float, G: float, kappa: float, tref: Optional[float] = None):
    tr = t if tref is None else tref
    from .control import CHANNEL_NAMES, channel_value  # local: keeps the public import list short

    tab, dflt = schedule.table, schedule.default_array
    dq = channel_value(tab, dflt, CHANNEL_NAMES.index("delta_Q"), t, tr)
    dc = channel_value(tab, dflt, CHANNEL_NAMES.index("Delta_c"), t, tr)
    e = eigs_full(dq, dc, G, kappa)
    return e.eigenvalues, _gauge_fixed(e.eigenvectors)


def tracked_branch(schedule: Schedule, t: float, params, n_track: int = 400) -> int:
    """Index (ascending order) at time ``t`` of the eigenstate that starts
    with the largest spin weight, followed by maximal overlap."""
    t0 = schedule.t_span[0]
    _, v = _eig_at(schedule, t0, params.G, params.kappa_coll)
    j = int(np.argmax(np.abs(v[0, :])))
    vec = v[:, j]
    for tau in np.linspace(t0, t, n_track)[1:]:
        _, v = _eig_at(schedule, tau, params.G, params.kappa_coll)
        j = int(np.argmax(np.abs(v.conj().T @ vec)))
        vec = v[:, j]
    return j


def adiabaticity_margin(schedule: Schedule, t: float, params, branch: Optional[int] = None) -> float:
    """max_j |⟨λ_j|dλ₁/dt⟩| / |λ₁ - λ_j| at time ``t``.

    The tracked eigenstate λ₁ is ``branch`` (ascending index) or, if not
    given, the one connected to the initial spin state. The derivative is a
    central difference with step 1e-4 times the schedule span.
    """
    a, b = schedule.t_span
    span = b - a
    if span <= 0:
        raise ValueError("schedule has zero duration")
    h = 1e-4 * span
    for ts in schedule.switch_times:
        if abs(t - ts) <= h:
            raise ValueError(f"t={t:g} is at a control discontinuity ({ts:g}); the margin is undefined")
    G, kappa = params.G, params.kappa_coll
    w, v = _eig_at(schedule, t, G, kappa)
    gaps = np.abs(np.subtract.outer(w, w))[np.triu_indices(3, 1)]
    if np.min(gaps) < 1e-12 * G:
        raise ValueError(f"degenerate eigenvalues at t={t:g}; the adiabaticity margin is undefined")
    j1 = tracked_branch(schedule, t, params) if branch is None else int(branch)
    lo, hi = max(a, t - h), min(b, t + h)
    _, vm = _eig_at(schedule, lo, G, kappa, tref=t)
    _, vp = _eig_at(schedule, hi, G, kappa, tref=t)
    dv = (vp[:, j1] - vm[:, j1]) / (hi - lo)
    margin = 0.0
    for j in range(3):
        if j == j1:
            continue
        margin = max(margin, abs(np.vdot(v[:, j], dv)) / abs(w[j1] - w[j]))
    return margin


# ---------------------------------------------------------------------------
# EIT storage


def cos_theta_from_omega(omega0, g_coll: float):
    """Mixing angle of the dark state, tan Θ = g√N / Ω₀."""
    omega0 = np.asarray(omega0, dtype=float)
    return omega0 / np.hypot(omega0, g_coll)


def eit_dark_amplitude(t, cos_theta: Callable, gamma_co: float, envelope: PhotonEnvelope,
                       t_start: Optional[float] = None, rtol: float = 1e-11, atol: float = 1e-13):
    """Dark-state amplitude D(t) in the bad-cavity adiabatic limit.

    D(t) = √γ ∫_{t_start}^t cosΘ(τ) Φ(τ) exp(-(γ/2) ∫_τ^t cos²Θ) dτ with Φ
    the flux-normalized input. Evaluated as the equivalent linear ODE with
    an adaptive high-order integrator. ``t_start`` defaults to 20 photon
    durations before the envelope center.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t_start is None:
        t_start = envelope.center - 20.0 * envelope.T
    sg = math.sqrt(gamma_co)

    def f(tau, y):
        c = float(cos_theta(tau))
        return [-0.5 * gamma_co * c * c * y[0] + sg * c * float(sech_envelope(envelope, tau))]

    if np.any(t < t_start):
        raise ValueError("requested times precede t_start")
    order = np.argsort(t)
    ts = t[order]
    end = ts[-1]
    if end == t_start:
        return np.zeros_like(t)
    sol = solve_ivp(f, (t_start, end), [0.0], method="DOP853", t_eval=ts, rtol=rtol, atol=atol,
                    max_step=envelope.T / 4.0)
    if not sol.success:
        raise RuntimeError(f"dark-state quadrature failed: {sol.message}")
    out = np.empty_like(t)
    out[order] = sol.y[0]
    return out


def eit_output_field(t, cos_theta: Callable, gamma_co: float, envelope: PhotonEnvelope,
                     t_start: Optional[float] = None):
    """Reflected flux amplitude Φ_in - √γ cosΘ D (zero under impedance matching)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    D = eit_dark_amplitude(t, cos_theta, gamma_co, envelope, t_start)
    c = np.array([float(cos_theta(x)) for x in t])
    return sech_envelope(envelope, t) - math.sqrt(gamma_co) * c * D


def eit_max_efficiency(C: float) -> float:
    if C < 0:
        raise ValueError("cooperativity must be non-negative")
    if math.isinf(C):
        return 1.0
    return C / (1.0 + C)


def dicke_overlap(class_kappa, class_weights) -> float:
    """|Σ√w_j κ_j|² / Σ|κ_j|²: overlap of the symmetric state with the
    cavity-coupled spin state."""
    k = np.asarray(class_kappa)
    w = np.asarray(class_weights, dtype=float)
    if k.shape != w.shape:
        raise ValueError("class_kappa and class_weights differ in length")
    norm = float(np.sum(np.abs(k) ** 2))
    if norm == 0 or not np.any(w > 0):
        raise ValueError("dicke_overlap needs nonzero coupling and weight vectors")
    return float(abs(np.sum(np.sqrt(w) * k)) ** 2 / norm)


def asymptotic_stats(times, series, window: Optional[float] = None) -> tuple[float, float, float]:
    """(mean, min, max) of ``series`` over the final ``window`` of ``times``.

    The default window is the last 10% of the sampled span. The mean is the
    time average (trapezoidal), so non-uniform sampling does not bias it.
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if times.shape != series.shape or times.size == 0:
        raise ValueError("times and series must be non-empty and of equal length")
    span = times[-1] - times[0]
    if window is None:
        window = 0.1 * span
    if window < 0 or window > span * (1 + 1e-12):
        raise ValueError(f"window {window:g} is outside the sampled span {span:g}")
    sel = times >= times[-1] - window * (1 + 1e-12)
    ts, ys = times[sel], series[sel]
    if ts.size == 1 or ts[-1] == ts[0]:
        mean = float(ys.mean())
    else:
        mean = float(np.trapezoid(ys, ts) / (ts[-1] - ts[0]))
    return mean, float(ys.min()), float(ys.max())
