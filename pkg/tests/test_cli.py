import csv
import json

import numpy as np
import pytest

from polycycle.builder import verify_invariants
from polycycle.cli import load_polycycle, run
from polycycle.plot import render_svg


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def load(path):
    with open(path) as fh:
        return json.load(fh)


def test_analyze_all_ones(work, capsys):
    assert run(["analyze", "--ratios", "1,1,1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["result"]["delta"] == 0
    assert rep["tool"] == "polycycle" and rep["config"]["command"] == "analyze"
    assert "version" in rep


def test_build_roundtrip(work):
    assert run(["build", "--n", "3", "--ratios", "2,3,0.5", "--out", "field.json"]) == 0
    built, mu, family = load_polycycle("field.json")
    assert verify_invariants(built)["ok"]
    assert built.ratios == (2.0, 3.0, 0.5)


def test_modelmap_one_root(work, capsys):
    assert run(["modelmap", "--ratios", "2", "--offsets", "0.01", "--alpha", "1",
                "--window", "0,0.1"]) == 0
    res = json.loads(capsys.readouterr().out)["result"]
    assert len(res["roots"]) == 1 and abs(res["roots"][0] - 0.01010205) < 1e-6
    assert res["stable_under_refinement"]


def test_modelmap_search_reproducible(work):
    args = ["modelmap", "--ratios", "2,0.5", "--search", "--samples", "200", "--grid", "200",
            "--seed", "7"]
    assert run(args + ["--out", "a.json"]) == 0
    assert run(args + ["--out", "b.json"]) == 0
    a, b = load("a.json"), load("b.json")
    assert a["result"] == b["result"] and a["config"]["seed"] == 7


def test_usage_errors(work, capsys):
    assert run(["analyze", "--ratios", "2,x"]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["kind"] == "usage"
    assert run(["cycles", "--field", "missing.json"]) == 1
    assert run(["nonsense"]) == 1
    assert run(["modelmap", "--ratios", "2,-1", "--offsets", "0,0"]) == 1


def test_numerical_failure_exit_code(work, capsys):
    run(["build", "--n", "3", "--ratios", "2,0.3333333333333333,4", "--out", "f.json"])
    assert run(["simulate", "--field", "f.json", "--seed", "5,5", "--tspan", "0,50"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["kind"] == "numerical"


def test_threads_env(work, monkeypatch, capsys):
    monkeypatch.setenv("POLYCYCLE_THREADS", "3")
    assert run(["analyze", "--ratios", "2,0.5"]) == 0
    assert json.loads(capsys.readouterr().out)["config"]["threads"] == 3
    monkeypatch.setenv("POLYCYCLE_THREADS", "zero")
    assert run(["analyze", "--ratios", "2,0.5"]) == 1


def test_simulate_csv(work):
    run(["build", "--n", "3", "--ratios", "2,2,2", "--out", "f.json"])
    assert run(["simulate", "--field", "f.json", "--seed", "0.1,0.0", "--tspan", "0,5",
                "--out", "traj.csv", "--report", "sim.json"]) == 0
    with open("traj.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "x2"]
    t = np.array([float(r[0]) for r in rows[1:]])
    assert t[0] == 0 and abs(t[-1] - 5) < 1e-12 and np.all(np.diff(t) > 0)
    assert load("sim.json")["config"]["command"] == "simulate"


def test_dulac_and_melnikov(work):
    run(["build", "--n", "3", "--ratios", "2,3,0.5", "--out", "f.json"])
    assert run(["dulac", "--field", "f.json", "--saddle-index", "1", "--out", "d.json"]) == 0
    d = load("d.json")["result"]
    assert abs(d["forward"]["exponent"] - 2) < 0.1
    assert run(["melnikov", "--field", "f.json", "--out", "m.json"]) == 0
    m = np.array(load("m.json")["result"]["matrix"])
    assert np.all(np.diag(m) > 0)


def test_break_cycles_plot(work):
    run(["build", "--n", "3", "--ratios", "2,0.3333333333333333,4", "--out", "f.json"])
    assert run(["break", "--field", "f.json", "--free", "1e-4", "--out", "broken.json"]) == 0
    br = load("broken.json")["result"]["break"]
    assert br["residual"] < 1e-9
    assert run(["cycles", "--field", "broken.json", "--window", "0,0.1", "--trap",
                "--out", "cycles.json"]) == 0
    cyc = load("cycles.json")["result"]
    assert len(cyc["cycles"]) >= 1
    assert cyc["trapping_curve"]["verdict"]
    for name in ("p1.svg", "p2.svg"):
        assert run(["plot", "--field", "broken.json", "--cycles", "cycles.json",
                    "--out", name]) == 0
    one, two = (work / "p1.svg").read_bytes(), (work / "p2.svg").read_bytes()
    assert one == two
    assert b'class="cycle"' in one and b"p3</text>" in one


def test_bump_approx(work):
    assert run(["bump-approx", "--delta1", "0.1", "--delta2", "0.3", "--center", "0.5,0.5",
                "--eps", "0.1", "--box", "0,0,1,1", "--out", "q.json"]) == 0
    res = load("q.json")["result"]
    assert res["sandwich_holds"]


def test_render_polygon_only():
    tri = [(0, 1), (-0.87, -0.5), (0.87, -0.5)]
    svg = render_svg(tri)
    assert svg.count("<polygon") == 1 and "polyline" not in svg
    assert all(f"p{k}</text>" in svg for k in (1, 2, 3))
    assert svg == render_svg(tri)
