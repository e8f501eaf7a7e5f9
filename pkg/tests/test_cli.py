import json
import subprocess
import sys
from pathlib import Path

import pytest

from gencode import cli
from gencode.latency import expected_M

GOLDEN = Path(__file__).parent / "golden"


def run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def rows(text):
    lines = text.strip().split("\n")
    head = lines[0].split(",")
    return head, [dict(zip(head, ln.split(","))) for ln in lines[1:]]


@pytest.mark.parametrize("table", sorted(cli.COLUMNS))
def test_headers_match_golden(table):
    golden = (GOLDEN / f"{table}.header").read_text().strip()
    assert ",".join(cli.COLUMNS[table]) == golden


def test_analyze_header_and_monotone(tmp_path):
    code, text = run(tmp_path, "analyze", "--gen-size", "10:200:10")
    assert code == 0
    head, rs = rows(text)
    assert head == cli.COLUMNS["analyze"]
    assert len(rs) == 20
    # equal-size generations only exist when g divides N; other rows carry a short last generation
    means = [float(r["mean_W"]) for r in rs if 1000 % int(r["g"]) == 0]
    assert len(means) == 6
    assert all(b < a for a, b in zip(means, means[1:]))


def test_analyze_single_generation(tmp_path):
    code, text = run(tmp_path, "analyze", "--n-packets", "30", "--gen-size", "30", "--field", "4")
    assert code == 0
    _, rs = rows(text)
    assert float(rs[0]["mean_W"]) == pytest.approx(expected_M(30, 30, 4), rel=1e-9)


def test_analyze_deterministic(tmp_path):
    a = run(tmp_path, "analyze", "--gen-size", "10,25,50", name="a.csv")[1]
    b = run(tmp_path, "analyze", "--gen-size", "10,25,50", name="b.csv")[1]
    assert a == b


def test_simulate_deterministic_and_seed_sensitive(tmp_path):
    argv = ["simulate", "--n-packets", "60", "--gen-size", "10", "--trials", "20", "--field", "16"]
    a = run(tmp_path, *argv, "--seed", "3", name="a.csv")[1]
    b = run(tmp_path, *argv, "--seed", "3", name="b.csv")[1]
    c = run(tmp_path, *argv, "--seed", "4", name="c.csv")[1]
    assert a == b
    assert a != c


def test_simulate_parallel_matches_serial(tmp_path):
    argv = ["simulate", "--n-packets", "60", "--base-size", "10", "--annex", "3",
            "--scheme", "annex", "--trials", "12", "--seed", "1"]
    a = run(tmp_path, *argv, name="a.csv")[1]
    b = run(tmp_path, *argv, "--jobs", "2", name="b.csv")[1]
    assert a == b


def test_simulate_single_trial(tmp_path):
    code, text = run(tmp_path, "simulate", "--n-packets", "50", "--gen-size", "10", "--trials", "1")
    assert code == 0
    _, rs = rows(text)
    r = rs[0]
    assert r["min"] == r["max"] and float(r["mean"]) == float(r["min"])
    assert float(r["std"]) == 0.0


def test_simulate_failure_curve(tmp_path):
    curve = tmp_path / "fail.csv"
    code, _ = run(tmp_path, "simulate", "--n-packets", "50", "--gen-size", "5", "--trials", "50",
                  "--failure-curve", str(curve))
    assert code == 0
    head, rs = rows(curve.read_text())
    assert head == cli.COLUMNS["failure"]
    fail = [float(r["empirical_failure"]) for r in rs]
    assert all(b <= a for a, b in zip(fail, fail[1:]))
    assert fail[-1] == 0.0


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_packets": 40, "gen-size": "10", "field": 16}))
    code, text = run(tmp_path, "analyze", "--config", str(cfg))
    assert code == 0
    _, rs = rows(text)
    assert (rs[0]["N"], rs[0]["q"]) == ("40", "16")
    code, text = run(tmp_path, "analyze", "--config", str(cfg), "--field", "2", name="b.csv")
    _, rs = rows(text)
    assert (rs[0]["N"], rs[0]["q"]) == ("40", "2")


def test_env_default_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "results"))
    assert cli.main(["analyze", "--n-packets", "20", "--gen-size", "5"]) == 0
    assert (tmp_path / "results" / "analyze.csv").exists()


@pytest.mark.parametrize("argv", [
    ["analyze", "--field", "3"],
    ["analyze", "--eps", "1.0"],
    ["analyze", "--n-packets", "10", "--gen-size", "20"],
    ["simulate", "--trials", "0", "--gen-size", "5"],
    ["simulate", "--n-packets", "50"],
    ["simulate", "--scheme", "bogus", "--gen-size", "5"],
    ["sweep-annex", "--base-size", "10", "--schemes", "annex,nope"],
])
def test_config_errors_exit_2(tmp_path, argv, capsys):
    code, _ = run(tmp_path, *argv)
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_bad_config_file_exit_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert run(tmp_path, "analyze", "--config", str(cfg))[0] == 2
    cfg.write_text("{not json")
    assert run(tmp_path, "analyze", "--config", str(cfg))[0] == 2


def test_convergence_error_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise cli.ConvergenceError("forced")
    monkeypatch.setattr(cli, "latency_estimate", boom)
    assert run(tmp_path, "analyze", "--gen-size", "10")[0] == 3


def test_sweep_l0_rows_identical_across_schemes(tmp_path):
    omega_out = tmp_path / "omega.csv"
    code, text = run(tmp_path, "sweep-annex", "--n-packets", "60", "--base-size", "10",
                     "--annex-range", "0,2", "--trials", "10", "--omega-out", str(omega_out))
    assert code == 0
    head, rs = rows(text)
    assert head == cli.COLUMNS["sweep-annex"]
    l0 = [r for r in rs if r["l"] == "0"]
    assert len(l0) == 3
    assert len({(r["sim_mean"], r["sim_std"], r["g"], r["n"]) for r in l0}) == 1
    om_head, om = rows(omega_out.read_text())
    assert om_head == cli.COLUMNS["omega"]
    # generation s=0 has nothing to overlap with
    assert all(float(r["g_minus_omega"]) == float(int(r["l"]) + 10) for r in om if r["s"] == "0")


def test_compare_l_star_zero_for_trivial_range(tmp_path):
    code, text = run(tmp_path, "compare", "--n-packets", "200", "--gen-size", "10,20", "--field", "16",
                     "--annex-range", "0")
    assert code == 0
    _, rs = rows(text)
    assert [r["l_star"] for r in rs] == ["0", "0"]
    assert all(r["h_star"] == r["g"] for r in rs)


def test_compare_summary_printed(tmp_path, capsys):
    code, _ = run(tmp_path, "compare", "--gen-size", "20,50", "--field", "16", "--annex-range", "0:10")
    assert code == 0
    assert "annex is lower" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    out = tmp_path / "x.csv"
    res = subprocess.run([sys.executable, "-m", "gencode", "analyze", "--n-packets", "20",
                          "--gen-size", "5", "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert out.read_text().startswith("N,g,n")
