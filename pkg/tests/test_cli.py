import json
import math

import numpy as np
import pytest

from tdho import cli
from tdho.io import read_csv
from tdho.riccati import ZeroSequence


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_csv(tmp_path, capsys, command, *sets, name="out.csv"):
    path = tmp_path / name
    args = [command, "-o", str(path)]
    for s in sets:
        args += ["--set", s]
    code, _, err = run(capsys, *args)
    return code, err, read_csv(path)


# ---------------------------------------------------------------------------
# subcommands

def test_solve_slow_mathieu_config(tmp_path, capsys):
    cfg = tmp_path / "slow.cfg"
    cfg.write_text("# resonance-free Mathieu case\nprofile = mathieu\nomega_bar = 1\n"
                   "eta = 0.5\nalpha = 0.5\nt1 = 30\n")
    code, err = run(capsys, "solve", "-c", str(cfg), "-o", str(tmp_path / "s.csv"))[::2]
    assert code == 0, err
    schema, meta, cols = read_csv(tmp_path / "s.csv")
    assert schema == "solve/1"
    assert meta["cert_psi_bound"] == "True" and meta["cert_log_I_bound"] == "True"
    for name in ("t", "q", "p", "psi", "I", "q_zeroth", "q_tilde", "q_hat", "I_1",
                 "psi_bound", "log_I_bound"):
        assert name in cols
    assert cols["t"][0] == 0.0 and cols["t"][-1] == pytest.approx(30.0)
    err_hat = np.max(np.abs(cols["q_hat"] - cols["q"]))
    err_tilde = np.max(np.abs(cols["q_tilde"] - cols["q"]))
    assert err_hat < err_tilde


def test_solve_resonant_mathieu_config(tmp_path, capsys):
    code, err, (schema, _, cols) = run_csv(tmp_path, capsys, "solve", "eta=0.2", "alpha=2")
    assert code == 0, err
    assert np.all(np.isfinite(cols["q"]))


def test_solve_constant_smoke(tmp_path, capsys):
    code, err, (_, _, cols) = run_csv(tmp_path, capsys, "solve", "profile=constant",
                                      "omega=1.3", "t1=10", "h=2")
    assert code == 0, err
    t = cols["t"]
    assert np.allclose(cols["q"], np.cos(1.3 * t), atol=1e-9)
    assert np.allclose(cols["q_hat"], cols["q"], atol=1e-9)
    assert np.all(cols["psi_bound"] == 0)
    assert "psi_2" in cols


def test_solve_across_a_jump(tmp_path, capsys):
    code, err, _ = run_csv(tmp_path, capsys, "solve", "profile=step", "t_d=2", "t1=5")
    assert code == 0, err


def test_solve_json_to_stdout(capsys):
    code, out, err = run(capsys, "solve", "--format", "json", "--set", "profile=constant",
                         "--set", "t1=2")
    assert code == 0, err
    doc = json.loads(out)
    assert doc["schema"] == "solve/1"
    assert len(doc["columns"]["t"]) == len(doc["columns"]["q"])


def test_zeros_constant_table(tmp_path, capsys):
    code, err, (schema, _, cols) = run_csv(tmp_path, capsys, "zeros", "profile=constant",
                                           "omega=2", "t1=10")
    assert code == 0, err
    assert schema == "zero-sequence/1"
    # q0=1, p0=0: the first zero (of p) sits at t0
    assert np.allclose(cols["t_h"], (cols["h"] - 1) * math.pi / 4, atol=1e-10)


def test_zeros_mathieu_window(tmp_path, capsys):
    code, err, (_, _, cols) = run_csv(tmp_path, capsys, "zeros", "eta=0.5", "alpha=0.5",
                                      "t1=40")
    assert code == 0, err
    assert len(cols["h"]) >= 20


def test_zeros_failed_certificate_exits_nonzero(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(ZeroSequence, "certificates",
                        lambda self: {"gap_bounds": False, "refined_bounds": True})
    code, err, _ = run_csv(tmp_path, capsys, "zeros", "profile=constant", "t1=5")
    assert code == 1
    assert "certificate failed: gap_bounds" in err


def test_floquet_map(tmp_path, capsys):
    b = tmp_path / "b.csv"
    code, err, (schema, meta, cols) = run_csv(
        tmp_path, capsys, "floquet-map", "grid_n=64", "omega_min=0.9", "omega_max=1.1",
        "eta_min=0", "eta_max=0.2", f"boundary_out={b}")
    assert code == 0, err
    assert schema == "stability-map/1"
    assert list(cols)[:4] == ["omega_bar", "eta", "mu", "class"]
    assert len(cols["mu"]) == 64 * 64
    row0 = cols["class"][cols["eta"] == 0]
    assert set(row0) <= {"stable", "marginal"}
    marks = [float(x) for x in meta["resonances"].split(";")]
    assert marks == pytest.approx([1.0, 2.0, 3.0])
    assert read_csv(b)[0] == "stability-boundary/1"
    assert "100%" in err


def test_adiabatic_spline_report(tmp_path, capsys):
    code, err, (schema, meta, cols) = run_csv(tmp_path, capsys, "adiabatic", "phases=8")
    assert code == 0, err
    assert schema == "scaling-report/1"
    assert cols["slope"][0] >= 1.7
    assert meta["k"] == "2"


def test_adiabatic_bump_report(tmp_path, capsys):
    code, err, (_, _, cols) = run_csv(tmp_path, capsys, "adiabatic", "profile=bump_ramp",
                                      "phases=8")
    assert code == 0, err
    assert np.all(cols["delta_I"] > 0)


def test_adiabatic_constant_zero_report(tmp_path, capsys):
    code, err, (_, _, cols) = run_csv(tmp_path, capsys, "adiabatic", "profile=constant")
    assert code == 0, err
    assert np.all(cols["delta_I"] == 0)


def test_trace_check(tmp_path, capsys):
    code, err, (schema, _, cols) = run_csv(tmp_path, capsys, "trace-check")
    assert code == 0, err
    assert schema == "trace-check/1"
    assert abs(cols["mu_trace"][0] - cols["mu_monodromy"][0]) < 1e-7


def test_ermakov_check(tmp_path, capsys):
    code, err, (schema, _, cols) = run_csv(tmp_path, capsys, "ermakov-check")
    assert code == 0, err
    assert schema == "ermakov-check/1"
    assert cols["wronskian_drift"][0] < 1e-9


def test_deterministic_output(tmp_path, capsys):
    a = run_csv(tmp_path, capsys, "trace-check", name="a.csv")
    b = run_csv(tmp_path, capsys, "trace-check", name="b.csv")
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    assert a[0] == b[0] == 0


def test_floats_have_17_digits(tmp_path, capsys):
    run_csv(tmp_path, capsys, "trace-check")
    line = (tmp_path / "out.csv").read_text().splitlines()[-1]
    mu = line.split(",")[0]
    assert float(mu) == float("%.17g" % float(mu))
    assert len(mu.lstrip("-").replace(".", "").lstrip("0").split("e")[0]) >= 16


# ---------------------------------------------------------------------------
# config errors

@pytest.mark.parametrize("argv", [
    ["solve", "--set", "foo=1"],
    ["solve", "--set", "tol=abc"],
    ["solve", "--set", "tol=1"],
    ["solve", "--set", "eta=2"],
    ["solve", "--set", "t1=-1"],
    ["solve", "--set", "h=-1"],
    ["solve", "--set", "profile=nope"],
    ["solve", "--set", "missing_equals"],
    ["floquet-map", "--set", "grid_n=1"],
    ["floquet-map", "--set", "alpha=0"],
    ["adiabatic", "--set", "epsilons=0.2,0.1,0.05"],
    ["adiabatic", "--set", "epsilons=a,b"],
    ["trace-check", "--set", "profile=tanh_ramp"],
    ["solve", "--set", "q0=inf"],
])
def test_bad_config_single_line(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert out == ""
    lines = err.strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("tdho: config error:")


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(capsys, "solve", "-c", str(tmp_path / "none.cfg"))
    assert code == 2
    assert err.startswith("tdho: config error:")


def test_overrides_beat_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("profile=constant\nomega=1\nt1=3\n")
    code, out, _ = run(capsys, "solve", "-c", str(cfg), "--set", "omega=2", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    t, q = np.array(doc["columns"]["t"]), np.array(doc["columns"]["q"])
    assert np.allclose(q, np.cos(2 * t), atol=1e-9)


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for name in cli.COMMANDS:
        assert name in out
