import math

import numpy as np
import pytest
from scipy.integrate import quad

from spintransducer.control import (PhotonEnvelope, Schedule, Segment, constant_schedule,
                                    impedance_matched_control, impedance_matched_cos_theta, linear_sweep,
                                    project_photon, sech_envelope, staggered_pi, storage_segments)
from spintransducer.dynamics import mw_system
from spintransducer.integrator import IntegratorConfig, integrate
from spintransducer.model import PhysicalParams, build_field_grid
from spintransducer.presets import PRESETS, preset


def test_linear_sweep_endpoints():
    s = linear_sweep(3.0, 100.0, "qubit")
    assert s.delta_Q(0.0) == -1.5
    assert s.delta_Q(100.0) == 1.5
    assert s.delta_Q(50.0) == 0.0


def test_linear_sweep_zero_range_and_other_control():
    p = PhysicalParams(delta_Q_static=7.4)
    s = linear_sweep(0.0, 10.0, "cavity", p)
    t = np.linspace(0, 10, 101)
    assert np.all(s.Delta_c(t) == 0.0)
    assert np.all(s.delta_Q(t) == 7.4)


def test_linear_sweep_antisymmetric_exactly():
    T = 7650.0
    s = linear_sweep(4.0, T, "qubit")
    # dyadic offsets keep T/2 ± τ exactly representable
    tau = np.arange(0, 3825 * 64) / 64.0
    assert np.array_equal(s.delta_Q(T / 2 + tau), -s.delta_Q(T / 2 - tau))


@pytest.mark.parametrize("args", [(1.0, 0.0, "qubit"), (1.0, -1.0, "qubit"), (1.0, 1.0, "spin")])
def test_linear_sweep_rejects(args):
    with pytest.raises(ValueError):
        linear_sweep(*args)


def test_staggered_pi_durations():
    s = staggered_pi(PhysicalParams(G=1.0, kappa_coll=1.0))
    assert s.t_span[1] == pytest.approx(math.pi)
    s = staggered_pi(PhysicalParams(G=1.0, kappa_coll=0.2))
    assert s.t_span[1] == pytest.approx(3 * math.pi)
    assert s.t_span[1] < 10.0
    assert s.switch_times == [pytest.approx(math.pi / 0.4)]


def test_staggered_pi_phases():
    s = staggered_pi(PhysicalParams(G=1.0, kappa_coll=0.2), detuning=50.0)
    t1 = math.pi / 0.4
    assert s.Delta_c(0.5 * t1) == 0.0 and s.delta_Q(0.5 * t1) == 50.0
    assert s.Delta_c(t1 + 0.1) == 50.0 and s.delta_Q(t1 + 0.1) == 50.0


def test_staggered_pi_rejects_zero_coupling():
    with pytest.raises(ValueError):
        staggered_pi(PhysicalParams(kappa_coll=0.0))


def test_staggered_pi_reversed_order_returns_qubit_to_spin():
    # time reversal: q = 1, cavity-qubit exchange first, then spin-cavity
    p = PhysicalParams(G=1.0, kappa_coll=1.0)
    d = 50.0
    t1, t2 = math.pi / 2, math.pi / 2
    segs = (Segment("Delta_c", "constant", 0.0, t2, (d,)), Segment("delta_Q", "constant", 0.0, t2, (d,)),
            Segment("Delta_c", "constant", t2, t1 + t2, (0.0,)), Segment("delta_Q", "constant", t2, t1 + t2, (d,)))
    sched = Schedule((0.0, t1 + t2), segs)
    tr = integrate(mw_system(p, sched), np.array([0, 0, 1], dtype=complex), config=IntegratorConfig(rel_tol=1e-11))
    assert tr.populations["spin"][-1] > 0.999


def test_sech_envelope_values():
    env = PhotonEnvelope(T=3.0, center=2.0)
    peak = sech_envelope(env, 2.0)
    assert peak == pytest.approx(1 / math.sqrt(3.0))
    assert sech_envelope(env, 5.0) / peak == pytest.approx(1 / math.cosh(2.0))
    assert sech_envelope(env, -1.0) / peak == pytest.approx(0.2658, abs=1e-4)
    flux, _ = quad(lambda t: sech_envelope(env, t) ** 2, -60, 60, points=[2.0])
    assert flux == pytest.approx(1.0, rel=1e-10)


def test_sech_envelope_grid_normalization():
    env = PhotonEnvelope(T=2.0)
    grid = build_field_grid(1.0, 40 / env.T, 201)
    phi = lambda t: sech_envelope(env, t, grid) ** 2  # noqa: E731
    val, _ = quad(phi, -40, 40)
    assert grid.spacing / (2 * math.pi) * val == pytest.approx(1.0, rel=1e-9)


def test_projected_photon_is_normalized():
    env = PhotonEnvelope(T=1.786, center=8.93)
    grid = build_field_grid(2.8, 40 / env.T, 201)
    eta = project_photon(env, grid)
    assert np.sum(np.abs(eta) ** 2) == pytest.approx(1.0, abs=1e-6)


def test_projected_photon_reconstructs_envelope():
    # mirror field Σ_l η_l e^{-iΔ_l t} has the sech shape centred on the envelope
    env = PhotonEnvelope(T=2.0, center=3.0)
    grid = build_field_grid(1.0, 40 / env.T, 201)
    eta = project_photon(env, grid)
    t = np.linspace(-5, 11, 33)
    field = np.array([np.sum(eta * np.exp(-1j * grid.detunings * x)) for x in t])
    ref = sech_envelope(env, t)
    ratio = np.abs(field) / ref
    # finite band of modes: the residual is the truncated spectral tail
    assert np.allclose(ratio, ratio[16], rtol=1e-4)


def test_impedance_matched_asymptotes():
    T, g = 10.0, 10.0
    assert impedance_matched_cos_theta(-20 * T, T, g) == pytest.approx(2 / math.sqrt(g * T), rel=1e-12)
    om = impedance_matched_control(T, g, 5.0)
    assert om(30 * T) < 1e-20
    assert om(1e6) == 0.0


def test_impedance_matched_precondition():
    with pytest.raises(ValueError, match="gamma_co\\*T > 4"):
        impedance_matched_control(1.0, 4.0, 1.0)
    with pytest.raises(ValueError):
        storage_segments(0.0, 1.0, PhotonEnvelope(1.0), 3.0, 1.0)


def test_impedance_matched_monotone_shutoff():
    om = impedance_matched_control(10.0, 10.0, 5.0)
    t = np.linspace(1e-3, 100.0, 5000)
    v = om(t)
    assert np.all(np.diff(v) < 0)
    c = impedance_matched_cos_theta(np.linspace(-500, 500, 10001), 10.0, 10.0)
    assert np.all(c < 1.0) and np.all(c >= 0.0)


def test_storage_segment_matches_closure():
    env = PhotonEnvelope(T=10.0, center=50.0)
    sched = Schedule((0.0, 100.0), storage_segments(0.0, 100.0, env, 10.0, 5.0))
    om = impedance_matched_control(10.0, 10.0, 5.0, center=50.0)
    t = np.linspace(0, 99, 50)
    assert np.allclose(sched.value("omega", t), om(t), rtol=1e-12, atol=0)


@pytest.mark.parametrize("name", list(PRESETS))
def test_preset_schedules_finite(name):
    _, _, sched = preset(name)
    t = np.linspace(*sched.t_span, 10_000)
    for ch in ("delta_Q", "Delta_c", "omega", "omega_phase", "kappa_gate", "phi_in"):
        assert np.all(np.isfinite(sched.value(ch, t)))


def test_schedule_dict_round_trip():
    _, _, sched = preset("nv-stagpi-fig10")
    again = Schedule.from_dict(sched.to_dict())
    assert again == sched
    assert again.switch_times == sched.switch_times


def test_switch_times_only_for_jumps():
    segs = (Segment("delta_Q", "linear", 0.0, 1.0, (0.0, 1.0)), Segment("delta_Q", "linear", 1.0, 2.0, (1.0, 2.0)),
            Segment("Delta_c", "constant", 1.5, 2.0, (3.0,)))
    s = Schedule((0.0, 2.0), segs)
    assert s.breakpoints == [1.0, 1.5]
    assert s.switch_times == [1.5]


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment("bogus", "constant", 0, 1, (0,))
    with pytest.raises(ValueError):
        Segment("delta_Q", "cubic", 0, 1, (0,))
    with pytest.raises(ValueError):
        Segment("delta_Q", "constant", 1, 1, (0,))
    with pytest.raises(ValueError):
        Schedule((0, 1), (), {"nope": 1.0})


def test_omega_phase_and_complex_control():
    s = constant_schedule((0, 1), omega=2.0, omega_phase=math.pi / 2)
    assert s.omega_ctrl(0.5) == pytest.approx(2j)
