import json
import math
import subprocess
import sys

import numpy as np
import pytest

import oracles
from soninekit import io
from soninekit.cli import catalog, main

K0 = [[2.0, 0.5], [0.5, 1.0]]


@pytest.fixture
def kernel_dir(tmp_path):
    d = tmp_path / "kernels"
    d.mkdir()
    for name, doc in catalog().items():
        (d / f"{name}.json").write_text(json.dumps(doc))
    (d / "eye.json").write_text("[[1.0]]")
    (d / "cbf_form.json").write_text(json.dumps(
        {"dim": 2, "b": K0, "terms": [{"h": [[1.0, 0.0], [0.0, 1.0]], "r": 1.0}]}))
    return d


def _run(out, *args):
    return main(["--out", str(out)] + [str(a) for a in args])


def test_catalog_prints_specs(capsys):
    assert main(["catalog"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert {"powerlaw05", "besselk05", "constantK0", "damped05_dual"} <= set(doc)
    assert main(["catalog", "--name", "nope"]) == 2


def test_sonine_power_law(kernel_dir, tmp_path):
    out = tmp_path / "o"
    assert _run(out, "sonine", "--kernel", kernel_dir / "powerlaw05.json", "--t-end", 1, "--n", 512) == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["atom"] == [[0.0]] and sol["singular"]
    grid, vals, singular = io.read_csv_samples((out / "density.csv").read_text())
    assert singular
    assert vals[-1, 0, 0] == pytest.approx(oracles.INV_SQRT_PI, abs=5e-3)
    res = json.loads((out / "residual.json").read_text())
    assert res["collocation_residual_max"] < 1e-10


def test_sonine_constant_kernel(kernel_dir, tmp_path):
    out = tmp_path / "o"
    assert _run(out, "sonine", "--kernel", kernel_dir / "constantK0.json", "--n", 64) == 0
    sol = json.loads((out / "solution.json").read_text())
    np.testing.assert_allclose(sol["atom"], np.linalg.inv(K0), rtol=1e-12)
    _, vals, _ = io.read_csv_samples((out / "density.csv").read_text())
    assert np.max(np.abs(vals)) < 1e-10


def test_missing_file_exit_1_without_output(tmp_path):
    out = tmp_path / "o"
    assert _run(out, "sonine", "--kernel", tmp_path / "missing.json") == 1
    assert not out.exists()


def test_hypothesis_violation_exit_2(kernel_dir, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dim": 2, "terms": [
        {"coef": [[1.0, 0.0], [0.0, 0.0]], "prim": {"type": "exponential", "r": 1.0}}]}))
    out = tmp_path / "o"
    assert _run(out, "sonine", "--kernel", bad) == 2
    assert not out.exists()


def test_duality_forward_and_inverse(kernel_dir, tmp_path):
    out = tmp_path / "fwd"
    assert _run(out, "duality", "forward", "--kernel", kernel_dir / "exponential1.json",
                "--n-matrix", kernel_dir / "eye.json") == 0
    grid, c, _ = io.read_csv_samples((out / "creep.csv").read_text())
    assert np.max(np.abs(c[:, 0, 0] - oracles.creep_newtonian_exp(grid.nodes))) < 1e-3
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["creep_start"] == "finite initial slope"
    inv = tmp_path / "inv"
    assert _run(inv, "duality", "inverse", "--creep", out / "creep.csv") == 0
    rel = json.loads((inv / "relaxation.json").read_text())
    assert rel["n_matrix"][0][0] == pytest.approx(1.0, abs=1e-6)
    _, f, _ = io.read_csv_samples((inv / "kernel.csv").read_text())
    assert np.max(np.abs(f[:, 0, 0] - np.exp(-grid.nodes))) < 1e-3


def test_duality_vertical_creep_start(kernel_dir, tmp_path):
    out = tmp_path / "o"
    assert _run(out, "duality", "forward", "--kernel", kernel_dir / "powerlaw05.json") == 0
    assert json.loads((out / "diagnostics.json").read_text())["creep_start"] == "vertical creep start"


def test_duality_inverse_needs_creep(tmp_path):
    assert _run(tmp_path / "o", "duality", "inverse") == 2


@pytest.mark.parametrize("args, code", [
    (("pair", "--k", "powerlaw05.json", "--l", "powerlaw05.json"), 0),
    (("pair", "--k", "damped05.json", "--l", "damped05_dual.json"), 0),
    (("pair", "--k", "exponential1.json", "--l", "exponential1.json"), 3),
    (("cm", "--kernel", "powerlawK0.json"), 0),
    (("cm", "--kernel", "besselk05.json"), 3),
    (("stieltjes", "--cbf", "cbf_form.json"), 0),
])
def test_check_exit_codes(kernel_dir, tmp_path, args, code):
    out = tmp_path / "o"
    argv = [a if not a.endswith(".json") else kernel_dir / a for a in args]
    assert _run(out, "check", *argv) == code
    report = json.loads((out / "report.json").read_text())
    assert report["checks"][0]["passed"] is (code == 0)


def test_check_cm_witness(kernel_dir, tmp_path):
    out = tmp_path / "o"
    assert _run(out, "check", "cm", "--kernel", kernel_dir / "besselk05.json", "--t-min", 0.1, "--t-max", 2) == 3
    witness = json.loads((out / "report.json").read_text())["checks"][0]["witness"]
    assert witness["t"] == pytest.approx(0.617, abs=1e-3)


def test_check_bernstein_on_creep(kernel_dir, tmp_path):
    fwd = tmp_path / "fwd"
    _run(fwd, "duality", "forward", "--kernel", kernel_dir / "exponential1.json", "--n-matrix", kernel_dir / "eye.json")
    out = tmp_path / "o"
    assert _run(out, "check", "bernstein", "--samples", fwd / "creep.csv") == 0


def test_gfd_commands(kernel_dir, tmp_path):
    out = tmp_path / "d"
    assert _run(out, "gfd", "deriv", "--kernel", kernel_dir / "powerlaw05.json", "--poly", "0,1") == 0
    grid, v, _ = io.read_csv_samples((out / "deriv.csv").read_text())
    assert v[-1, 0] == pytest.approx(1.1284, abs=1e-4)
    out = tmp_path / "r"
    assert _run(out, "gfd", "relax", "--kernel", kernel_dir / "powerlaw05.json") == 0
    _, s, _ = io.read_csv_samples((out / "relax.csv").read_text())
    assert s[-1, 0] == pytest.approx(0.42758, abs=2e-3)
    iters = (out / "iterations.csv").read_text().splitlines()
    assert iters[0] == "t,iterations" and len(iters) == grid.n + 2
    out = tmp_path / "i"
    assert _run(out, "gfd", "integ", "--kernel", kernel_dir / "powerlaw05.json", "--poly", "0") == 0
    _, z, _ = io.read_csv_samples((out / "integ.csv").read_text())
    assert np.all(z == 0.0)


def test_gfd_path_csv(kernel_dir, tmp_path):
    g = io.infer_grid((np.arange(65) / 64) ** 2)
    path = tmp_path / "w.csv"
    path.write_text(io.samples_to_csv(g.nodes, g.nodes[:, None]))
    out = tmp_path / "o"
    assert _run(out, "gfd", "deriv", "--kernel", kernel_dir / "powerlaw05.json", "--path", path) == 0


def test_gfd_non_singular_exit_2(kernel_dir, tmp_path):
    out = tmp_path / "o"
    assert _run(out, "gfd", "deriv", "--kernel", kernel_dir / "exponential1.json", "--poly", "0,1") == 2
    assert not out.exists()


def test_determinism_and_seed_env(kernel_dir, tmp_path, monkeypatch):
    args = ("check", "cm", "--kernel", kernel_dir / "powerlawK0.json")
    assert main(["--out", str(tmp_path / "a"), "--seed", "5", *map(str, args)]) == 0
    assert main(["--out", str(tmp_path / "b"), "--seed", "5", *map(str, args)]) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    monkeypatch.setenv("SONINEKIT_SEED", "9")
    assert main(["--out", str(tmp_path / "c"), "--seed", "5", *map(str, args)]) == 0
    assert json.loads((tmp_path / "c" / "report.json").read_text())["seed"] == 9
    a1 = tmp_path / "s1"
    a2 = tmp_path / "s2"
    _run(a1, "sonine", "--kernel", kernel_dir / "powerlaw05.json", "--n", 64)
    _run(a2, "sonine", "--kernel", kernel_dir / "powerlaw05.json", "--n", 64)
    assert (a1 / "density.csv").read_bytes() == (a2 / "density.csv").read_bytes()


def test_module_entry_point(kernel_dir, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "soninekit", "--out", str(tmp_path / "o"), "check",
                           "pair", "--k", str(kernel_dir / "powerlaw05.json"), "--l",
                           str(kernel_dir / "powerlaw05.json")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
