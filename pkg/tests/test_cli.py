import json
import math
import subprocess
import sys

import numpy as np
import pytest

from spintransducer.cli import main, parse_grid
from spintransducer.config import ConfigError, load_config
from spintransducer.presets import preset_run


def _files(d):
    return sorted(p.name for p in d.iterdir())


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in ("qtune-fig4a", "nv-stagpi-fig10", "eit-matched"):
        assert name in out
    assert "Fig. 4(a)" in out


def test_run_writes_outputs_and_summary(tmp_path, capsys):
    assert main(["run", "--preset", "qtune-fig4a", "--out", str(tmp_path)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("run=qtune-fig4a ")
    mean = float(line.split("mean=")[1].split()[0])
    assert mean == pytest.approx(0.94, abs=0.02)
    assert "wall=" in line
    names = _files(tmp_path)
    assert {n.rsplit(".", 1)[1] for n in names} == {"csv", "json", "yaml"}
    csv = next(tmp_path.glob("*.csv")).read_text().splitlines()
    assert csv[0].startswith("#") and csv[1] == "t,spin,cavity,qubit,optical,norm"
    summary = json.loads(next(tmp_path.glob("*.json")).read_text())
    assert summary["stats"]["mean"] == pytest.approx(mean, abs=1e-6)
    # the echoed configuration reloads to the run that produced it
    assert load_config(next(tmp_path.glob("*.yaml"))).run == preset_run("qtune-fig4a")


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--preset", "stagpi-fig8", "--out", str(d)]) == 0
    assert _files(a) == _files(b)
    for n in _files(a):
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_config_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "mine.yaml"
    cfg.write_text("preset: qtune-fig4a\nprotocol: {T: 50.0}\n")
    assert main(["run", "--config", str(cfg), "--set", "params.Delta_c_static=6", "--out", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out.startswith("run=mine ")
    y = next((tmp_path / "o").glob("*.yaml"))
    run = load_config(y).run
    assert run.protocol.T == 50.0 and run.params.Delta_c_static == 6.0


@pytest.mark.parametrize("argv", [
    ["run", "--preset", "nope"],
    ["run"],
    ["run", "--preset", "qtune-fig4a", "--set", "params.bogus=1"],
    ["run", "--preset", "qtune-fig4a", "--rel-tol", "-1"],
    ["scan", "--preset", "qtune-fig4a", "--grid", "bogus:0:1:3"],
    ["scan", "--preset", "qtune-fig4a"],
    ["eit-design", "--gamma-co-T", "3"],
    ["frobnicate"],
    ["run", "--preset", "eit-matched", "--set", "params.g_ab=0", "--set", "stage=combined",
     "--set", "protocol.kind=stagpi"],
])
def test_config_errors_exit_1(argv, tmp_path, capsys):
    assert main(argv + (["--out", str(tmp_path)] if argv[0] in ("run", "scan", "eit-design") else [])) == 1
    assert capsys.readouterr().err


def test_numerical_failure_exit_2(tmp_path, capsys):
    argv = ["run", "--preset", "stagpi-fig8", "--set", "integrator.rel_tol=1e-300",
            "--set", "integrator.abs_tol=1e-300", "--out", str(tmp_path)]
    assert main(argv) == 2
    assert "underflow" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_eit_design_spot_check(tmp_path, capsys):
    assert main(["eit-design", "--gamma-co-T", "100", "--T", "2", "--span", "20", "--out", str(tmp_path)]) == 0
    f = next(tmp_path.glob("*.csv"))
    data = np.loadtxt(f, delimiter=",", comments="#", skiprows=2)
    assert f.read_text().splitlines()[1] == "t,cos_theta,omega0"
    assert data[0, 1] == pytest.approx(2 / math.sqrt(100), rel=1e-9)
    assert np.all(np.diff(data[data[:, 0] > 0, 2]) < 0)


def test_small_scan(tmp_path, capsys):
    argv = ["scan", "--preset", "qtune-fig4a", "--grid", "Delta_c:6:10:3", "--grid", "delta_qk:2:4:2",
            "--workers", "1", "--out", str(tmp_path)]
    assert main(argv) == 0
    assert "cells=6" in capsys.readouterr().out
    csv = next(tmp_path.glob("scan-*.csv")).read_text().splitlines()
    assert csv[1] == "Delta_c,delta_qk,mean,min,max" and len(csv) == 8
    doc = json.loads(next(tmp_path.glob("scan-*.json")).read_text())
    assert len(doc["fidelity_mean"]) == 3


def test_analytic(capsys):
    assert main(["analytic", "mismatch", "--kappa", "0.2"]) == 0
    assert "bound=0.1479" in capsys.readouterr().out
    assert main(["analytic", "pi-pulse"]) == 0
    assert "population=1.0" in capsys.readouterr().out
    assert main(["analytic", "cooperativity", "--g-ab", "5", "--gamma-co", "10", "--gamma-a", "0.1"]) == 0
    assert "C=100" in capsys.readouterr().out


def test_parse_grid():
    name, v = parse_grid("T:10:30:3")
    assert name == "T" and np.allclose(v, [10, 20, 30])
    with pytest.raises(ConfigError):
        parse_grid("T:1:2")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "spintransducer", "presets"], capture_output=True, text=True)
    assert r.returncode == 0 and "qtune-fig4a" in r.stdout
