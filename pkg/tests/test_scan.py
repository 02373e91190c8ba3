import json
import math
from dataclasses import replace

import numpy as np
import pytest

from spintransducer.analytics import eit_max_efficiency
from spintransducer.integrator import IntegratorConfig
from spintransducer.model import EnsembleSpec, PhysicalParams, cooperativity
from spintransducer.presets import preset_run
from spintransducer.scan import (PhotonSettings, Protocol, ProtocolError, ProtocolRun, ScanResult, apply_axis,
                                 compare_protocols, minimal_time, output_name, run_protocol, run_scan)

FAST = IntegratorConfig(n_records=401)


def test_run_validation():
    with pytest.raises(ProtocolError):
        ProtocolRun(stage="mw-only", initial="photon")
    with pytest.raises(ProtocolError):
        ProtocolRun(stage="combined", initial="spin")
    with pytest.raises(ProtocolError):
        Protocol(kind="sideways")
    with pytest.raises(ProtocolError):
        Protocol(kind="qtune", T=0.0)


def test_run_dict_round_trip_and_hash():
    run = preset_run("nv-ctune-fig9")
    again = ProtocolRun.from_dict(json.loads(json.dumps(run.to_dict())))
    assert again == run
    assert again.config_hash() == run.config_hash()
    assert output_name("x", run, "csv").startswith("x-") and output_name("x", run, "csv").endswith(".csv")


def test_apply_axis_errors():
    q = preset_run("qtune-fig4a")
    c = preset_run("ctune-fig6")
    with pytest.raises(ProtocolError, match="unknown scan parameter"):
        apply_axis(q, "gamma", 1.0)
    with pytest.raises(ProtocolError):
        apply_axis(q, "Delta_ck", 1.0)
    with pytest.raises(ProtocolError):
        apply_axis(c, "Delta_c", 1.0)
    with pytest.raises(ProtocolError):
        apply_axis(q, "delta_Q", 1.0)
    assert apply_axis(q, "Delta_c", 3.0).params.Delta_c_static == 3.0
    assert apply_axis(c, "Delta_ck", 20.0).protocol.sweep_range == 20.0


def test_scan_rejects_names_before_integrating(monkeypatch):
    import spintransducer.scan as sc
    calls = []
    monkeypatch.setattr(sc, "run_protocol", lambda *a, **k: calls.append(1))
    with pytest.raises(ProtocolError):
        run_scan(preset_run("qtune-fig4a"), ("Delta_c", [1, 2]), ("bogus", [1, 2]))
    with pytest.raises(ProtocolError):
        run_scan(preset_run("qtune-fig4a"), ("Delta_c", [1, 2]), ("Delta_c", [1, 2]))
    assert calls == []


def test_one_by_one_scan_equals_single_run():
    base = preset_run("qtune-fig4a")
    r = run_scan(base, ("Delta_c", [8.0]), ("delta_qk", [3.0]), FAST)
    _, st = run_protocol(base, FAST)
    assert r.fidelity_mean.shape == (1, 1)
    assert r.fidelity_mean[0, 0] == st.mean
    assert (r.fidelity_min[0, 0], r.fidelity_max[0, 0]) == (st.min, st.max)


def test_scan_transpose_and_bounds():
    base = preset_run("ctune-contour-k1")
    a1, a2 = ("delta_Q", [5.0, 7.4, 10.0]), ("Delta_ck", [20.0, 38.0])
    r = run_scan(base, a1, a2, FAST)
    t = run_scan(base, a2, a1, FAST)
    assert np.array_equal(r.fidelity_mean, t.fidelity_mean.T)
    assert np.array_equal(r.transposed().fidelity_max, t.fidelity_max)
    assert np.all(0 <= r.fidelity_min) and np.all(r.fidelity_min <= r.fidelity_mean)
    assert np.all(r.fidelity_mean <= r.fidelity_max) and np.all(r.fidelity_max <= 1 + 1e-9)


def test_scan_exports():
    r = run_scan(preset_run("qtune-fig4a"), ("Delta_c", [7.0, 8.0]), ("T", [50.0]), FAST)
    lines = r.to_csv().splitlines()
    assert lines[0].startswith("#") and lines[1] == "Delta_c,T,mean,min,max"
    assert len(lines) == 4
    doc = json.loads(r.to_json())
    assert doc["metadata"]["config_hash"] == preset_run("qtune-fig4a").config_hash()
    assert ProtocolRun.from_dict(doc["metadata"]["base"]) == preset_run("qtune-fig4a")


def test_parallel_scan_matches_serial():
    base = preset_run("qtune-fig4a")
    axes = (("Delta_c", [6.0, 8.0]), ("delta_qk", [2.0, 3.0]))
    a = run_scan(base, *axes, FAST)
    b = run_scan(base, *axes, FAST, workers=2)
    assert np.array_equal(a.fidelity_mean, b.fidelity_mean)


@pytest.mark.slow
def test_fig3_region_and_weak_coupling_shrinkage():
    dc = np.arange(2.0, 21.0, 2.0)
    dq = np.arange(1.0, 9.0, 1.0)
    strong = run_scan(preset_run("qtune-contour-k1"), ("Delta_c", dc), ("delta_qk", dq), FAST)
    weak = run_scan(preset_run("qtune-contour-k0.2"), ("Delta_c", dc), ("delta_qk", dq), FAST)
    hi = strong.fidelity_mean > 0.9
    D, Q = np.meshgrid(dc, dq, indexing="ij")
    assert hi.sum() >= 5
    assert D[hi].mean() == pytest.approx(8.0, abs=2.5)
    assert Q[hi].mean() == pytest.approx(3.0, abs=1.5)
    assert weak.area_above(0.9) * 2 <= strong.area_above(0.9)


def test_compare_target_zero():
    rows = compare_protocols(1.0, 0.0)
    assert [r.T for r in rows] == [0.0, 0.0, 0.0]
    with pytest.raises(ProtocolError):
        compare_protocols(1.0, 1.0)


def test_minimal_time_monotone_in_target():
    base = preset_run("qtune-contour-k1")
    T1, s1 = minimal_time(base, 0.85, FAST)
    T2, s2 = minimal_time(base, 0.92, FAST)
    assert T1 is not None and T2 is not None
    assert T2 >= T1
    assert s1.mean >= 0.85 and s2.mean >= 0.92


def test_minimal_time_unreachable():
    base = preset_run("qtune-contour-k0.2")
    assert minimal_time(base, 0.999, FAST, T_max=64.0) == (None, None)


def _eit_run(**kw):
    run = preset_run("eit-matched")
    return replace(run, **kw)


def test_storage_failure_aborts():
    run = _eit_run(params=replace(preset_run("eit-matched").params, g_ab=0.0), stage="combined",
                   protocol=Protocol("stagpi"))
    with pytest.raises(ProtocolError, match="no excitation"):
        run_protocol(run, FAST)


def test_combined_bounded_by_eit_efficiency():
    run = _eit_run(stage="combined", protocol=Protocol("stagpi"))
    _, st = run_protocol(run, FAST)
    C = cooperativity(run.params)
    assert st.final <= eit_max_efficiency(C) + 0.01
    assert st.final > 0.9
    assert st.stored is not None and st.min <= st.final <= st.max


def test_grid_and_markov_storage_agree():
    grid = run_protocol(_eit_run(), FAST)[1].stored
    markov = run_protocol(_eit_run(photon=replace(preset_run("eit-matched").photon, field="markov")), FAST)[1].stored
    assert markov == pytest.approx(grid, abs=2e-3)


def test_broadened_mw_run_uses_full_system():
    base = preset_run("stagpi-fig8")
    run = replace(base, ensemble=EnsembleSpec(n_classes=5, width_sb=0.0, lineshape="gaussian"))
    _, a = run_protocol(base, FAST)
    _, b = run_protocol(run, FAST)
    assert b.final == pytest.approx(a.final, abs=1e-6)


@pytest.mark.parametrize("name", ["qtune-fig4a", "ctune-fig6", "stagpi-fig8"])
def test_tolerance_halving_convergence(name):
    run = preset_run(name)
    _, a = run_protocol(run, IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12))
    _, b = run_protocol(run, IntegratorConfig(rel_tol=5e-10, abs_tol=5e-13))
    for f in ("mean", "min", "max", "final"):
        assert abs(getattr(a, f) - getattr(b, f)) < 1e-6
