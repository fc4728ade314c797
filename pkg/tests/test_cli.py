"""End-to-end command-line runs via the installed console script."""

import json
import subprocess
import sys

import numpy as np
import pytest

from klab import mesh as meshmod

from conftest import problem_path


def run_cli(*args, cwd=None):
    cmd = [sys.executable, "-m", "klab.cli", *map(str, args)]
    return subprocess.run(cmd, capture_output=True, text=True, cwd=cwd)


def test_domain_validate(tmp_path):
    res = run_cli("domain", "validate", "--domain",
                  problem_path("square.json"), "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    payload = json.loads((tmp_path / "domain_validate.json").read_text())
    assert payload["dimension"] == 2
    assert payload["num_vertices"] == 4
    assert payload["schema_version"] == 1
    assert "num_edges" not in payload


def test_domain_validate_3d(tmp_path):
    res = run_cli("domain", "validate", "--domain",
                  problem_path("l_prism.json"), "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    payload = json.loads((tmp_path / "domain_validate.json").read_text())
    assert payload["num_singular_edges"] == 18
    assert payload["num_vertices"] == 12


def test_mesh_build_and_refine(tmp_path):
    res = run_cli("mesh", "build", "--domain", problem_path("square.json"),
                  "--h", "0.25", "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    mesh_file = tmp_path / "mesh.txt"
    m = meshmod.read_mesh(mesh_file)
    assert m.num_elements == 32
    res2 = run_cli("mesh", "refine", "--mesh", mesh_file, "--levels", "1",
                   "--out", tmp_path)
    assert res2.returncode == 0, res2.stderr
    r = meshmod.read_mesh(tmp_path / "mesh_refined.txt")
    assert r.num_elements == 128
    info = json.loads((tmp_path / "mesh_refine.json").read_text())
    assert info["summary"]["elements"] == 128
    assert info["summary"]["min_angle"]["value"] > 0.0


def test_mesh_build_graded(tmp_path):
    res = run_cli("mesh", "build", "--domain", problem_path("l_shape.json"),
                  "--h", "0.25", "--kappa", "0.5", "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    m = meshmod.read_mesh(tmp_path / "mesh.txt")
    assert m.grading is not None
    assert m.grading.kappa == 0.5


def test_weights_dump_and_certify(tmp_path):
    res = run_cli("weights", "dump", "--domain", problem_path("square.json"),
                  "--h", "0.5", "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    lines = (tmp_path / "weights.csv").read_text().strip().split("\n")
    assert lines[0] == "node_id,x,y,eta,r_omega"
    assert len(lines) == 1 + 9
    res2 = run_cli("weights", "certify", "--domain",
                   problem_path("square.json"), "--h", "0.5",
                   "--out", tmp_path)
    assert res2.returncode == 0, res2.stderr
    payload = json.loads((tmp_path / "weights_certify.json").read_text())
    assert 0.5 <= payload["lower"] <= payload["upper"] <= 1.0
    assert payload["n_points"] >= 1000


def test_norm_command_matches_library(tmp_path, square):
    res = run_cli("norm", "--domain", problem_path("square.json"),
                  "--expr", "x*y", "--mu", "1", "--a", "0.5",
                  "--h", "0.25", "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    payload = json.loads((tmp_path / "norm.json").read_text())
    from klab import femcore, sobolev, weights
    m = meshmod.build_mesh(square, 0.25)
    u = femcore.interpolate(m, lambda p: p[:, 0] * p[:, 1])
    rep = sobolev.k_norm(u, weights.eta_field(square),
                         sobolev.NormSpec(1, 0.5))
    assert payload["norm"]["value"] == pytest.approx(rep.value, rel=1e-12)
    assert "value" in res.stdout


def test_norm_command_polar(tmp_path):
    res = run_cli("norm", "--domain", problem_path("l_shape.json"),
                  "--expr", "r^(2/3)*sin(2*theta/3)", "--polar-vertex", "0",
                  "--mu", "1", "--a", "1", "--h", "0.25", "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    payload = json.loads((tmp_path / "norm.json").read_text())
    assert payload["norm"]["value"] > 0.0


def test_solve_convergence_study(tmp_path):
    res = run_cli("solve", "--problem", problem_path(
        "manufactured_square.json"), "--levels", "3", "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    payload = json.loads((tmp_path / "solve.json").read_text())
    assert len(payload["levels"]) == 3
    assert payload["l2_rate_fit"] > 1.8
    assert payload["h1_rate_fit"] > 0.9
    csv_lines = (tmp_path / "solve_convergence.csv").read_text()
    assert csv_lines.startswith("level,h,")
    assert "l2_error" in csv_lines.split("\n")[0]


def test_solve_singular_problem(tmp_path):
    res = run_cli("solve", "--problem", problem_path("lshape_singular.json"),
                  "--levels", "2", "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    payload = json.loads((tmp_path / "solve.json").read_text())
    fitted = payload["h1_rate_fit"]
    assert 0.5 < fitted < 0.85


def test_poincare_command(tmp_path):
    res = run_cli("poincare", "--domain", problem_path("square.json"),
                  "--h", "0.25", "--samples", "200", "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    payload = json.loads((tmp_path / "poincare.json").read_text())
    assert payload["passed"] is True
    assert payload["constructive_kappa"] >= payload["variational_kappa"]
    assert "constructive" in res.stdout


def test_window_probe_command(tmp_path):
    res = run_cli("window-probe", "--domain", problem_path("square.json"),
                  "--a-grid", "0,0.5,1", "--h", "0.25", "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    payload = json.loads((tmp_path / "window_probe.json").read_text())
    assert payload["window"]["upper"] == 1.0
    assert payload["predicted_edge"]["value"] == pytest.approx(2.0)


def test_regularity_study_command(tmp_path):
    res = run_cli("regularity-study", "--problem",
                  problem_path("lshape_singular.json"), "--levels", "2",
                  "--out", tmp_path)
    assert res.returncode == 0, res.stderr
    payload = json.loads((tmp_path / "regularity_study.json").read_text())
    assert len(payload["levels"]) == 2
    assert len(payload["k2_norms"]) == 2
    for entry in payload["levels"]:
        assert entry["report"]["stability_ratio"] > 0.0
    csv_head = (tmp_path / "regularity_study.csv").read_text().split("\n")[0]
    assert "k2_norm" in csv_head and "stability_ratio" in csv_head


def test_byte_identical_reruns(tmp_path):
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    for d in (d1, d2):
        res = run_cli("solve", "--problem",
                      problem_path("manufactured_square.json"),
                      "--levels", "1", "--out", d)
        assert res.returncode == 0, res.stderr
    assert (d1 / "solve.json").read_bytes() == (d2 / "solve.json").read_bytes()
    assert (d1 / "solve_convergence.csv").read_bytes() == \
        (d2 / "solve_convergence.csv").read_bytes()


def test_missing_file_exit_code(tmp_path):
    res = run_cli("solve", "--problem", tmp_path / "nope.json",
                  "--out", tmp_path)
    assert res.returncode == 2
    assert "missing input file" in res.stderr


def test_invalid_problem_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "domain": {
        "dimension": 2,
        "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]]},
        "mesh": {"h": -0.5}}))
    res = run_cli("solve", "--problem", bad, "--out", tmp_path)
    assert res.returncode == 2
    assert "error" in res.stderr.lower()


def test_invalid_expression_exit_code(tmp_path):
    res = run_cli("norm", "--domain", problem_path("square.json"),
                  "--expr", "__import__('os')", "--h", "0.5",
                  "--out", tmp_path)
    assert res.returncode == 2


def test_unknown_argument_exit_code(tmp_path):
    res = run_cli("solve", "--problem",
                  problem_path("manufactured_square.json"),
                  "--frobnicate", "1")
    assert res.returncode == 2


def test_console_script_entry():
    res = subprocess.run(["klab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "window-probe" in res.stdout
