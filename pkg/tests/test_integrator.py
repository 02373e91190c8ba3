import math

import numpy as np
import pytest

from spintransducer.analytics import pi_pulse_q
from spintransducer.control import Segment, Schedule, constant_schedule, linear_sweep, staggered_pi
from spintransducer.dynamics import System, eit_system, full_system, mw_system
from spintransducer.integrator import IntegrationError, IntegratorConfig, integrate
from spintransducer.model import EnsembleSpec, PhysicalParams, build_ensemble, build_field_grid

from conftest import random_state


def test_zero_rhs_constant_trajectory(rng):
    sys = eit_system(PhysicalParams(g_ab=0.0), None, constant_schedule((0, 5.0)))
    x0 = random_state(rng, sys.size)
    for method in ("rk-adaptive-5(4)", "rk4-fixed"):
        tr = integrate(sys, x0, config=IntegratorConfig(method=method, n_records=11))
        assert np.array_equal(tr.states, np.tile(x0, (11, 1)))


@pytest.mark.parametrize("kappa", [1.0, 0.6])
def test_resonant_pi_pulse_matches_closed_form(kappa):
    p = PhysicalParams(G=1.0, kappa_coll=kappa)
    T = 4 * math.pi
    tr = integrate(mw_system(p, constant_schedule((0, T))), np.array([1, 0, 0], complex),
                   config=IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, n_records=401))
    q_ref = pi_pulse_q(tr.times, 1.0, kappa)
    assert np.max(np.abs(np.abs(tr.states[:, 2]) ** 2 - np.abs(q_ref) ** 2)) < 1e-8
    assert np.max(np.abs(tr.states[:, 2] - q_ref)) < 1e-8


def test_rk4_fourth_order():
    p = PhysicalParams(G=1.0, kappa_coll=0.7)
    sched = linear_sweep(3.0, 20.0, "qubit", PhysicalParams(Delta_c_static=2.0))
    sys = mw_system(p, sched)
    x0 = np.array([1, 0, 0], complex)
    ref = integrate(sys, x0, config=IntegratorConfig(rel_tol=1e-12, abs_tol=1e-15)).final_state
    errs = [np.linalg.norm(integrate(sys, x0, config=IntegratorConfig(method="rk4-fixed", dt=dt, n_records=2)).final_state - ref)
            for dt in (0.1, 0.05)]
    assert 8 < errs[0] / errs[1] < 32


def test_deterministic_fixed_step():
    p = PhysicalParams(G=1.0, kappa_coll=0.7, gamma_e=0.1)
    sys = mw_system(p, staggered_pi(p, detuning=50.0))
    cfg = IntegratorConfig(method="rk4-fixed", dt=1e-3)
    a = integrate(sys, np.array([1, 0, 0], complex), config=cfg)
    b = integrate(sys, np.array([1, 0, 0], complex), config=cfg)
    assert np.array_equal(a.states, b.states)


def test_norm_nonincreasing_with_losses(rng):
    p = PhysicalParams(G=1.0, kappa_coll=0.8, g_ab=1.2, gamma_a=0.3, gamma_s=0.01, gamma_e=0.05,
                       gamma_cmu=0.02, gamma_co=1.0)
    ens = build_ensemble(EnsembleSpec(n_classes=4, width_sb=0.2, width_ab=0.4, lineshape="gaussian"), p)
    sys = full_system(p, ens, None, constant_schedule((0, 30.0), omega=0.6, Delta_c=0.5))
    x0 = random_state(rng, sys.size)
    tr = integrate(sys, x0, config=IntegratorConfig(n_records=301))
    assert np.all(np.diff(tr.populations["norm"]) <= 1e-10)
    assert all(np.all(v >= 0) for v in tr.populations.values())


@pytest.mark.parametrize("method", ["rk-adaptive-5(4)", "rk4-fixed"])
def test_time_reversibility(rng, method):
    p = PhysicalParams(G=1.0, kappa_coll=0.9, g_ab=1.1)
    grid = build_field_grid(1.0, 10.0, 7)
    ens = build_ensemble(EnsembleSpec(n_classes=2, width_sb=0.1, width_ab=0.2, lineshape="gaussian"), p)
    sched = Schedule((0.0, 10.0), (Segment("Delta_c", "linear", 0.0, 6.0, (-2.0, 2.0)),
                                   Segment("omega", "constant", 3.0, 10.0, (0.5,))))
    sys = full_system(p, ens, grid, sched)
    x0 = random_state(rng, sys.size)
    cfg = IntegratorConfig(method=method, rel_tol=1e-10, dt=1e-3, n_records=5)
    fwd = integrate(sys, x0, config=cfg)
    back = integrate(sys, fwd.final_state, config=cfg, backward=True)
    tol = 1e-9 if method == "rk4-fixed" else 10 * 1e-10 * 10
    assert np.max(np.abs(back.states[0] - x0)) < tol
    assert np.max(np.abs(back.states - fwd.states)) < tol


def test_switch_times_are_step_boundaries():
    # q evolves freely with δ_Q switching 0 → 10 at t = 1; exact phase e^{-i·10·(t-1)}
    p = PhysicalParams(G=1e-300, kappa_coll=0.0)
    sched = Schedule((0.0, 2.0), (Segment("delta_Q", "constant", 1.0, 2.0, (10.0,)),))
    tr = integrate(mw_system(p, sched), np.array([0, 0, 1], complex),
                   config=IntegratorConfig(rel_tol=1e-12, abs_tol=1e-15, n_records=201))
    ref = np.where(tr.times <= 1.0, 1.0, np.exp(-10j * (tr.times - 1.0)))
    assert np.max(np.abs(tr.states[:, 2] - ref)) < 1e-10


def test_nan_aborts():
    sys = mw_system(PhysicalParams(), constant_schedule((0, 1)))
    with pytest.raises(IntegrationError, match="non-finite"):
        integrate(sys, np.array([np.nan, 0, 0], complex))


def test_step_underflow():
    sys = mw_system(PhysicalParams(), constant_schedule((0, 1.0), Delta_c=1e3))
    with pytest.raises(IntegrationError, match="underflow"):
        integrate(sys, np.array([1, 0, 0], complex), config=IntegratorConfig(rel_tol=1e-300, abs_tol=1e-300))


def test_input_validation():
    sys = mw_system(PhysicalParams(), constant_schedule((0, 1)))
    with pytest.raises(ValueError, match="size"):
        integrate(sys, np.zeros(4, complex))
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        integrate(sys, np.zeros(3, complex), t_record=[0.0, 2.0])


def test_record_interval():
    cfg = IntegratorConfig(record_interval=0.3)
    assert np.allclose(cfg.record_times((0, 1.0)), [0, 0.3, 0.6, 0.9, 1.0])


def test_csv_export():
    p = PhysicalParams()
    tr = integrate(mw_system(p, constant_schedule((0, 1))), np.array([1, 0, 0], complex),
                   config=IntegratorConfig(n_records=3))
    lines = tr.to_csv().splitlines()
    assert lines[0].startswith("#") and "1/G" in lines[0]
    assert lines[1] == "t,spin,cavity,qubit,optical,norm"
    assert len(lines) == 5
    vals = lines[3].split(",")
    assert float(vals[0]) == 0.5
    assert max(len(v.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) for v in vals) <= 12
    assert float(vals[-1]) == pytest.approx(1.0, abs=1e-9)


def test_custom_system_kind_is_used():
    sys = mw_system(PhysicalParams(kappa_coll=0.0), constant_schedule((0, 1)))
    assert isinstance(sys, System) and sys.size == 3
