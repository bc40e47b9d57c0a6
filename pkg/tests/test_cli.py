import json
import os
import subprocess
import sys

import numpy as np
import pytest

from covfit.cli import main
from covfit.graph import latent_projection
from covfit.io import parse_graph_text, read_graph


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_cov(path, labels, s):
    rows = [",".join(labels)] + [",".join(repr(float(v)) for v in row) for row in s]
    path.write_text("\n".join(rows) + "\n")


@pytest.fixture
def random_cov(tmp_path, rng):
    w = rng.standard_normal((4, 10))
    s = w @ w.T / 10
    path = tmp_path / "s.csv"
    write_cov(path, ["a", "b", "c", "d"], s)
    return path, s


# -- fit -------------------------------------------------------------------------

def test_fit_example_data(data_dir, tmp_path, capsys):
    out_path = tmp_path / "fit.json"
    code, out, _ = run(
        ["fit", data_dir / "example.graph", "--corr", data_dir / "example_corr.csv", "--n", 39,
         "--out", out_path],
        capsys,
    )
    assert code == 0
    assert "-0.475" in out and "-0.378" in out and "-0.342" in out
    assert out.splitlines()[-1].split() == ["SD", "5.72", "92.0", "7.93", "2.05"]
    rep = json.loads(out_path.read_text())
    assert list(rep) == [
        "algorithm", "status", "converged", "iterations", "loglik", "residual", "labels",
        "sigma_hat", "correlations", "sds", "input", "restart_logliks", "multimodal",
    ]
    assert rep["status"] == "converged" and rep["algorithm"] == "icf"
    assert rep["input"]["n"] == 39 and rep["input"]["p"] == 4
    r = np.array(rep["correlations"])
    assert r[2, 0] == pytest.approx(-0.475, abs=0.005)
    assert r[1, 0] == 0.0
    assert rep["residual"] <= 1e-8


def test_fit_report_is_deterministic(data_dir, tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert run(["fit", data_dir / "example.graph", "--corr", data_dir / "example_corr.csv",
                    "--n", 39, "--out", p], capsys)[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_fit_timing_flag(data_dir, tmp_path, capsys):
    p = tmp_path / "t.json"
    code, out, _ = run(["fit", data_dir / "example.graph", "--corr", data_dir / "example_corr.csv",
                        "--n", 39, "--out", p, "--timing"], capsys)
    assert code == 0 and "wall time" in out
    assert json.loads(p.read_text())["wall_time"] >= 0


def test_fit_complete_and_empty(tmp_path, random_cov, capsys):
    path, s = random_cov
    full = tmp_path / "full.graph"
    full.write_text("a <-> b\na <-> c\na <-> d\nb <-> c\nb <-> d\nc <-> d\n")
    empty = tmp_path / "empty.graph"
    empty.write_text("vertex a b c d\n")
    for graph, want in ((full, s), (empty, np.diag(np.diag(s)))):
        out = tmp_path / "r.json"
        code, _, _ = run(["fit", graph, "--cov", path, "--n", 10, "--out", out], capsys)
        assert code == 0
        np.testing.assert_allclose(json.loads(out.read_text())["sigma_hat"], want, atol=1e-10)


def test_fit_from_data_and_start_file(tmp_path, capsys, rng):
    y = rng.standard_normal((3, 25))
    data = tmp_path / "y.csv"
    data.write_text("\n".join(f"{v}," + ",".join(repr(float(x)) for x in row) for v, row in zip("abc", y)) + "\n")
    g = tmp_path / "g.graph"
    g.write_text("a <-> b\nb <-> c\n")
    start = tmp_path / "start.csv"
    write_cov(start, ["a", "b", "c"], np.eye(3) * 2)
    code, out, _ = run(["fit", g, "--data", data, "--start", f"file:{start}"], capsys)
    assert code == 0 and "converged" in out
    code, out, _ = run(["fit", g, "--data", data, "--centered", "--algorithm", "anderson"], capsys)
    assert code == 0 and "anderson" in out


def test_fit_anderson_failure_exit_code(tmp_path, capsys):
    from covfit.simulate import random_instance
    from covfit.io import format_graph

    inst = random_instance(63, p=4)
    g = tmp_path / "g.graph"
    g.write_text(format_graph(inst.graph))
    cov = tmp_path / "s.csv"
    write_cov(cov, inst.graph.vertices, inst.summary.S)
    code, out, err = run(["fit", g, "--cov", cov, "--n", 50, "--centered", "--algorithm", "anderson"], capsys)
    assert code == 4
    assert "non_pd_iterate" in err
    code, _, _ = run(["fit", g, "--cov", cov, "--n", 50, "--centered"], capsys)
    assert code == 0


def test_fit_max_sweeps_warns(data_dir, capsys):
    code, _, err = run(["fit", data_dir / "example.graph", "--corr", data_dir / "example_corr.csv",
                        "--n", 39, "--max-sweeps", 1], capsys)
    assert code == 0 and "max_sweeps_reached" in err


@pytest.mark.parametrize("extra, code, msg", [
    (["--n", 4], 3, "too small"),
    ([], 2, "--n is required"),
    (["--n", 39, "--start", "random"], 2, "--start"),
])
def test_fit_errors(data_dir, capsys, extra, code, msg):
    got, _, err = run(["fit", data_dir / "example.graph", "--corr", data_dir / "example_corr.csv"] + extra,
                      capsys)
    assert got == code
    assert msg in err
    assert len(err.strip().splitlines()) == 1


def test_fit_label_mismatch(data_dir, capsys):
    code, _, err = run(["fit", data_dir / "four_path.graph", "--corr", data_dir / "example_corr.csv",
                        "--n", 39], capsys)
    assert code == 2 and "label mismatch" in err


def test_fit_non_pd_data(tmp_path, capsys):
    cov = tmp_path / "s.csv"
    write_cov(cov, ["a", "b"], [[1.0, 2.0], [2.0, 1.0]])
    g = tmp_path / "g.graph"
    g.write_text("a <-> b\n")
    code, _, err = run(["fit", g, "--cov", cov, "--n", 10], capsys)
    assert code == 3 and "not positive definite" in err


def test_usage_errors(capsys):
    assert run([], capsys)[0] == 2
    assert run(["fit"], capsys)[0] == 2
    assert run(["frobnicate"], capsys)[0] == 2


# -- graph commands --------------------------------------------------------------

def test_msep(data_dir, capsys):
    g = data_dir / "four_path.graph"
    code, out, _ = run(["msep", g, "--a", "1", "--b", "2", "--given", "3,4"], capsys)
    assert code == 1
    assert out.strip() == "connected: 1 <-> 3 <-> 4 <-> 2"
    code, out, _ = run(["msep", g, "--a", "1", "--b", "2", "--given", "3"], capsys)
    assert code == 0 and out.strip() == "separated"
    code, _, err = run(["msep", g, "--a", "1,2", "--b", "2"], capsys)
    assert code == 2


def test_equiv(data_dir, tmp_path, capsys):
    code, out, _ = run(["equiv", data_dir / "four_path.graph"], capsys)
    assert code == 1
    assert out.strip() == "no equivalent DAG: induced 4-path 1 <-> 3 <-> 4 <-> 2"
    chain = tmp_path / "chain.dag"
    chain.write_text("a -> b\nb -> c\n")
    code, out, _ = run(["equiv", chain], capsys)
    assert code == 1
    assert out.strip() == "no equivalent bi-directed graph: unshielded non-collider (a, b, c)"
    one = tmp_path / "one.graph"
    one.write_text("a <-> b\n")
    code, out, _ = run(["equiv", one], capsys)
    assert code == 0 and out.strip() == "equivalent DAG exists"
    mixed = tmp_path / "mixed.graph"
    mixed.write_text("a <-> b\nb -> c\n")
    assert run(["equiv", mixed], capsys)[0] == 2


def test_project(data_dir, tmp_path, capsys, four_path):
    code, out, _ = run(["project", data_dir / "four_path_latent.dag"], capsys)
    assert code == 0
    assert parse_graph_text(out) == four_path
    assert parse_graph_text(out) == latent_projection(read_graph(data_dir / "four_path_latent.dag"))
    star = tmp_path / "star.dag"
    star.write_text("latent u\nu -> a\nu -> b\nu -> c\n")
    g = parse_graph_text(run(["project", star], capsys)[1])
    assert g.n_edges == 3
    flat = tmp_path / "flat.dag"
    flat.write_text("vertex a b\n")
    g = parse_graph_text(run(["project", flat], capsys)[1])
    assert g.vertices == ("a", "b") and g.n_edges == 0
    bad = tmp_path / "bad.dag"
    bad.write_text("a -> b\n")
    code, _, err = run(["project", bad], capsys)
    assert code == 2 and "'a'" in err


# -- compare ----------------------------------------------------------------------

def test_compare_example_data(data_dir, capsys):
    code, out, _ = run(["compare", data_dir / "example.graph", "--corr", data_dir / "example_corr.csv",
                        "--n", 39], capsys)
    assert code == 0
    rec, summary = [json.loads(line) for line in out.splitlines()]
    assert rec["icf"]["status"] == "converged" and rec["anderson"]["status"] == "converged"
    assert rec["agree"] is True
    assert summary["summary"]["agreement_rate"] == 1.0


def test_compare_failing_seed(capsys):
    code, out, _ = run(["compare", "--seeds", "63", "--p", 4], capsys)
    rec = json.loads(out.splitlines()[0])
    assert code == 0
    assert rec["seed"] == 63
    assert rec["anderson"]["status"] == "non_pd_iterate"
    assert rec["icf"]["status"] == "converged" and rec["agree"] is None


def test_compare_random_parallel_keeps_order(tmp_path, capsys):
    out_path = tmp_path / "bench.jsonl"
    code, out, _ = run(["compare", "--random", 12, "--p", 5, "--jobs", 2, "--out", out_path], capsys)
    assert code == 0
    lines = [json.loads(x) for x in out.splitlines()]
    assert [r["seed"] for r in lines[:-1]] == list(range(12))
    assert all(r["icf"]["status"] == "converged" and r["icf"]["monotone"] for r in lines[:-1])
    assert lines[-1]["summary"]["instances"] == 12
    assert out_path.read_text() == out
    serial = run(["compare", "--random", 12, "--p", 5], capsys)[1]
    assert serial == out


def test_compare_argument_errors(data_dir, capsys):
    assert run(["compare"], capsys)[0] == 2
    assert run(["compare", data_dir / "example.graph", "--random", 2], capsys)[0] == 2


# -- process-level ----------------------------------------------------------------

def test_module_entry_point_and_logging(data_dir):
    env = dict(os.environ, COVFIT_LOG="trace")
    proc = subprocess.run(
        [sys.executable, "-m", "covfit", "fit", str(data_dir / "example.graph"),
         "--corr", str(data_dir / "example_corr.csv"), "--n", "39"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert "icf sweep 1:" in proc.stderr
    assert "SD" in proc.stdout
    env["COVFIT_LOG"] = "off"
    quiet = subprocess.run(proc.args, capture_output=True, text=True, env=env)
    assert quiet.stderr == "" and quiet.stdout == proc.stdout
    env["COVFIT_LOG"] = "loud"
    bad = subprocess.run(proc.args, capture_output=True, text=True, env=env)
    assert bad.returncode == 2 and "COVFIT_LOG" in bad.stderr
