import io
import json

import numpy as np
import pytest

from ncpick.cli import EXIT_CAP, EXIT_DECISION, EXIT_INPUT, EXIT_OK, choose_levels, main
from ncpick.correspondence import free_context
from ncpick.io import dump_json, load_problem, parse_problem, problem_to_dict

from instances import feasible_problem, two_vertex_context


def run(*argv):
    buf = io.StringIO()
    code = main(list(map(str, argv)), buf)
    return code, buf.getvalue()


def machine(*argv):
    code, text = run(*argv, "--format", "machine")
    return code, json.loads(text)


def write(path, doc):
    path.write_text(dump_json(doc) if not isinstance(doc, str) else doc)
    return path


@pytest.fixture
def feasible_file(tmp_path, rng):
    return write(tmp_path / "p.json", problem_to_dict(feasible_problem(two_vertex_context(), 2, rng, 0.2)))


@pytest.fixture
def infeasible_file(tmp_path):
    return write(tmp_path / "bad.json", {"correspondence": {"d": 1}, "points": [[[[0]]]],
                                         "targets": [[[[2]]]]})


def test_check_feasible(feasible_file):
    code, out = machine("check", feasible_file)
    assert code == EXIT_OK and out["feasible"] and out["min_eigenvalue"] >= 0


def test_check_infeasible_exact_eigenvalue(infeasible_file):
    code, out = machine("check", infeasible_file)
    assert code == EXIT_DECISION
    assert out["min_eigenvalue"] == pytest.approx(-3.0, abs=1e-12)


def test_solve_infeasible(infeasible_file):
    code, out = machine("solve", infeasible_file)
    assert code == EXIT_DECISION and out["feasible"] is False


def test_solve_verify_eval_round_trip(feasible_file, tmp_path):
    sol = tmp_path / "sol.json"
    code, out = machine("solve", feasible_file, "--out", sol)
    assert code == EXIT_OK and out["certified"]
    code, out = machine("verify", sol)
    assert code == EXIT_OK and out["reproduced"] and out["certified"]
    code, out = machine("eval", sol)
    assert code == EXIT_OK
    assert all(v["series_vs_exact"] <= v["tail_bound"] + 1e-10 for v in out["values"])


def test_eval_with_extra_points(tmp_path, rng):
    ctx = free_context(1, 1)
    prob = write(tmp_path / "p.json", problem_to_dict(feasible_problem(ctx, 1, rng)))
    sol = tmp_path / "s.json"
    assert run("solve", prob, "--out", sol)[0] == EXIT_OK
    pts = write(tmp_path / "pts.json", [[[[0.1]]], [[[0.2]]]])
    code, out = machine("eval", sol, "--points", pts)
    assert code == EXIT_OK and len(out["values"]) == 2
    far = write(tmp_path / "far.json", [[[[1.5]]]])
    assert run("eval", sol, "--points", far)[0] == EXIT_INPUT


def test_verify_detects_tampering(feasible_file, tmp_path):
    sol = tmp_path / "sol.json"
    run("solve", feasible_file, "--out", sol)
    doc = json.loads(sol.read_text())
    doc["problem"]["targets"][0][0][0][0] = [0.123, 0.0]
    write(sol, doc)
    assert run("verify", sol)[0] == EXIT_INPUT
    run("solve", feasible_file, "--out", sol)
    doc = json.loads(sol.read_text())
    doc["colligation"]["W"][0][0] = [5.0, 0.0]
    write(sol, doc)
    assert run("verify", sol)[0] == EXIT_DECISION


@pytest.mark.parametrize("text", ["{", "[]", '{"correspondence": {"d": 1}}',
                                  '{"correspondence": {"d": 1}, "points": [[[[0.5]]]], "targets": [[[[0.1, 0.2, 0.3]]]]}'])
def test_malformed_inputs(tmp_path, text, capsys):
    f = write(tmp_path / "x.json", text)
    assert run("check", f)[0] == EXIT_INPUT
    assert "input error" in capsys.readouterr().err


def test_missing_file_and_bad_usage(tmp_path):
    assert run("check", tmp_path / "nope.json")[0] == EXIT_INPUT
    assert run("frobnicate")[0] == EXIT_INPUT
    assert run("compare")[0] == EXIT_INPUT


def test_point_outside_ball(tmp_path):
    f = write(tmp_path / "x.json", {"correspondence": {"d": 1}, "points": [[[[1.0]]]],
                                    "targets": [[[[0.0]]]]})
    assert run("check", f)[0] == EXIT_INPUT


def test_cap_exit(tmp_path, rng):
    ctx = free_context(3, 2)
    f = write(tmp_path / "p.json", problem_to_dict(feasible_problem(ctx, 1, rng, 0.9)))
    code, _ = run("solve", f, "--cap", 1000)
    assert code == EXIT_CAP
    assert run("ms-cp", f, "--cap", 10)[0] == EXIT_CAP


def test_ms_cp_and_example(tmp_path):
    f = tmp_path / "ex.json"
    code, text = run("example", "--r", 0.5, "--eps", 0.5, "--out", f)
    assert code == EXIT_OK and "not CP" in text
    code, out = machine("ms-cp", f)
    assert code == EXIT_DECISION and out["completely_positive"] is False
    assert out["choi_min_eigenvalue"] < 0
    code, out = machine("check", f)
    assert code == EXIT_OK and out["pick_eigenvalues"] == pytest.approx([0.75, 1.1875], abs=1e-10)
    assert run("example", "--r", 1.5)[0] == EXIT_INPUT


def test_compare_example():
    code, out = machine("compare", "--example", 0.5, 0.5)
    assert code == EXIT_OK
    assert out["cj_feasible"] and not out["ms_cp"]
    assert out["choi_minor_det"] == pytest.approx(-0.25, abs=1e-10)


def test_compare_central_problem(tmp_path):
    doc = {"correspondence": {"d": 1}, "points": [[[[0.5]]], [[[-0.3]]]],
           "targets": [[[[0.2]]], [[[-0.12]]]]}
    code, out = machine("compare", write(tmp_path / "c.json", doc))
    assert code == EXIT_OK and out["cj_feasible"] and out["ms_cp"]
    conn = out["connection"]
    assert max(conn["dual"], conn["point"], conn["maps"]) <= conn["tail"] + 1e-8


def test_tolerance_precedence(tmp_path, monkeypatch):
    doc = {"correspondence": {"d": 1}, "points": [[[[0.5]]]], "targets": [[[[0.1]]]],
           "tolerances": {"residual_tol": 1e-7}}
    f = write(tmp_path / "t.json", doc)
    monkeypatch.setenv("NCPICK_RESIDUAL_TOL", "1e-6")
    monkeypatch.setenv("NCPICK_PSD_TOL", "1e-5")
    p, _ = load_problem(f)
    assert p.tol.residual_tol == 1e-7 and p.tol.psd_tol == 1e-5
    p, _ = load_problem(f, {"residual_tol": 1e-9})
    assert p.tol.residual_tol == 1e-9


def test_levels_flag_and_choice(rng):
    p = parse_problem({"correspondence": {"d": 1}, "points": [[[[0.5]]]], "targets": [[[[0.1]]]]})
    K = choose_levels(p, None)
    assert 0.5 ** (K + 1) / 0.5 <= 1e-10 < 0.5 ** K / 0.5
    assert choose_levels(p, 7) == 7


def test_problem_round_trip_is_exact(rng):
    p = feasible_problem(two_vertex_context(), 2, rng)
    q = parse_problem(json.loads(dump_json(problem_to_dict(p))))
    for a, b in zip(p.points, q.points):
        assert np.array_equal(a.matrix, b.matrix)
    for a, b in zip(p.targets, q.targets):
        assert np.array_equal(a.matrix, b.matrix)


def test_human_output(feasible_file):
    code, text = run("check", feasible_file)
    assert code == EXIT_OK and "verdict: feasible" in text
