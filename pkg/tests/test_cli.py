import csv
import json

import numpy as np
import pytest

from varmatch import io
from varmatch.cli import EXIT_INPUT, EXIT_NO_DESCENT, EXIT_NUMERIC, EXIT_OK, main
from varmatch.synthetic import icosphere
from varmatch.varifold import DiscreteVarifold, GrayImage

from .helpers import random_varifold


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    values = {}
    for line in out.out.splitlines():
        key, _, val = line.partition(" ")
        values[key] = val
    return code, values, out.err


def test_convert_unit_square(tmp_path, capsys):
    src = tmp_path / "square.json"
    src.write_text(json.dumps({"vertices": [[0, 0], [1, 0], [1, 1], [0, 1]], "closed": True}))
    code, out, _ = run(capsys, "convert", "--kind", "curve", src, "-o", tmp_path / "sq.vf.json")
    assert code == EXIT_OK
    assert out["diracs"] == "4" and float(out["total_mass"]) == 4.0
    assert len(io.load_varifold(tmp_path / "sq.vf.json")) == 4


def test_convert_step_image(tmp_path, capsys):
    arr = np.zeros((6, 8))
    arr[:, 4:] = 1.0
    io.save_pgm(GrayImage.from_array(arr), tmp_path / "step.pgm", maxval=255)
    code, _, _ = run(
        capsys, "convert", "--kind", "image", tmp_path / "step.pgm", "--grad-threshold", "0",
        "-o", tmp_path / "s.vf.json",
    )
    assert code == EXIT_OK
    mu = io.load_varifold(tmp_path / "s.vf.json")
    assert set(mu.x[:, 0]) == {3.0, 4.0}
    np.testing.assert_allclose(mu.d, np.tile([1.0, 0.0], (len(mu), 1)))


def test_convert_icosphere_mesh(tmp_path, capsys):
    io.save_obj(icosphere(3), tmp_path / "icosphere.obj")
    code, out, _ = run(capsys, "convert", "--kind", "mesh", tmp_path / "icosphere.obj")
    assert code == EXIT_OK
    assert abs(float(out["total_mass"]) - 4 * np.pi) < 0.02 * 4 * np.pi


def test_convert_reports_parse_error(tmp_path, capsys):
    (tmp_path / "bad.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n")
    code, _, err = run(capsys, "convert", "--kind", "mesh", tmp_path / "bad.obj")
    assert code == EXIT_INPUT
    assert "line 4" in err


def test_distance_identical_files(tmp_path, capsys):
    io.save_varifold(random_varifold(np.random.default_rng(0), 5, 2), tmp_path / "a.json")
    code, out, _ = run(capsys, "distance", tmp_path / "a.json", tmp_path / "a.json")
    assert code == EXIT_OK
    assert float(out["squared_distance"]) == 0.0


def test_distance_binet_orthonormal_pairs(tmp_path, capsys):
    x = [[0.2, 0.1], [0.2, 0.1]]
    t = 0.4
    io.save_varifold(DiscreteVarifold(x, [[1, 0], [0, 1]]), tmp_path / "a.json")
    rot = [[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]]
    io.save_varifold(DiscreteVarifold(x, rot), tmp_path / "b.json")
    code, out, _ = run(capsys, "distance", tmp_path / "a.json", tmp_path / "b.json", "--gamma", "binet")
    assert code == EXIT_OK
    assert abs(float(out["squared_distance"])) < 1e-12


def test_distance_matches_library(tmp_path, capsys):
    from varmatch.fidelity import FidelityConfig, squared_distance
    from varmatch.kernels import OrientationKernel, SpatialKernel

    rng = np.random.default_rng(1)
    a, b = random_varifold(rng, 4, 3), random_varifold(rng, 5, 3)
    io.save_varifold(a, tmp_path / "a.json")
    io.save_varifold(b, tmp_path / "b.json")
    code, out, _ = run(
        capsys, "distance", tmp_path / "a.json", tmp_path / "b.json", "--sigma", "0.7", "--sigma-s", "0.9"
    )
    cfg = FidelityConfig(SpatialKernel(0.7), OrientationKernel("oriented-gaussian", 0.9))
    assert out["squared_distance"] == f"{squared_distance(cfg, a, b):.12g}"


def test_distance_dimension_mismatch(tmp_path, capsys):
    rng = np.random.default_rng(2)
    io.save_varifold(random_varifold(rng, 2, 2), tmp_path / "a.json")
    io.save_varifold(random_varifold(rng, 2, 3), tmp_path / "b.json")
    code, _, err = run(capsys, "distance", tmp_path / "a.json", tmp_path / "b.json")
    assert code == EXIT_INPUT and "dimension" in err


def _single_dirac(tmp_path, p1, p2):
    io.save_varifold(DiscreteVarifold([[0.0, 0.0]], [[1.0, 0.0]]), tmp_path / "v.json")
    io.save_momenta(np.array([[p1], [p2]], dtype=float), tmp_path / "p.json")
    return tmp_path / "v.json", tmp_path / "p.json"


def test_shoot_zero_momenta_is_static(tmp_path, capsys):
    v, p = _single_dirac(tmp_path, [0, 0], [0, 0])
    code, out, _ = run(
        capsys, "shoot", v, p, "--csv", tmp_path / "t.csv", "--svg", tmp_path / "g.svg", "-o", tmp_path / "t.json"
    )
    assert code == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert all(float(r["hamiltonian"]) == 0.0 for r in rows)
    assert {(r["x0"], r["x1"]) for r in rows} == {("0.0", "0.0")}
    assert (tmp_path / "g.svg").read_text().startswith("<svg")


def test_shoot_pure_translation_conserves_energy(tmp_path, capsys):
    v, p = _single_dirac(tmp_path, [0.5, 0.2], [0, 0])
    code, out, _ = run(capsys, "shoot", v, p, "--sigma-v", "0.5")
    assert code == EXIT_OK
    assert float(out["H_r_drift"]) < 1e-6


def test_shoot_pushforward_expansion(tmp_path, capsys):
    v, p = _single_dirac(tmp_path, [0, 0], [0.3, 0])
    code, out, _ = run(capsys, "shoot", v, p, "--action", "pushforward", "--sigma-v", "0.5", "-o", tmp_path / "t.json")
    assert code == EXIT_OK
    weights = [np.linalg.norm(node["u"][0]) for node in json.loads((tmp_path / "t.json").read_text())]
    assert np.all(np.diff(weights) > 0)


def test_shoot_momenta_shape_mismatch(tmp_path, capsys):
    io.save_varifold(random_varifold(np.random.default_rng(3), 3, 2), tmp_path / "v.json")
    io.save_momenta(np.zeros((2, 2, 2)), tmp_path / "p.json")
    code, _, err = run(capsys, "shoot", tmp_path / "v.json", tmp_path / "p.json")
    assert code == EXIT_INPUT and "expected 3" in err


def test_shoot_numerical_abort_exit_code(tmp_path, capsys):
    v, p = _single_dirac(tmp_path, [0, 0], [-1e6, 0])
    code, _, err = run(capsys, "shoot", v, p, "--action", "pushforward", "--steps", "2")
    assert code == EXIT_NUMERIC
    assert "step" in err


# ---------------------------------------------------------------- register


def _write_config(tmp_path, **kw):
    cfg = {"template": "a.json", "target": "b.json", "steps": 5, "max_iter": 10, "out": "run"}
    cfg.update(kw)
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    return tmp_path / "cfg.json"


def test_register_identical_shapes(tmp_path, capsys):
    io.save_varifold(random_varifold(np.random.default_rng(4), 3, 2), tmp_path / "a.json")
    io.save_varifold(io.load_varifold(tmp_path / "a.json"), tmp_path / "b.json")
    code, out, _ = run(capsys, "register", _write_config(tmp_path))
    assert code == EXIT_OK
    assert out["iterations"] == "0" and float(out["energy"]) == 0.0
    run_dir = tmp_path / "run"
    for name in ("result.json", "trajectory.json", "tracks.csv", "energy.csv", "overlay.svg", "geodesic.svg"):
        assert (run_dir / name).exists(), name
    result = json.loads((run_dir / "result.json").read_text())
    assert result["config"]["template"] == str(tmp_path / "a.json")
    assert result["config"]["lambda"] == 1.0


def test_register_writes_energy_csv_and_honours_overrides(tmp_path, capsys):
    rng = np.random.default_rng(5)
    mu = random_varifold(rng, 3, 2, 0.3)
    io.save_varifold(mu, tmp_path / "a.json")
    io.save_varifold(DiscreteVarifold(mu.x + [0.05, 0.0], mu.d, mu.r), tmp_path / "b.json")
    code, out, _ = run(
        capsys, "register", _write_config(tmp_path), "--lambda", "10", "--max-iter", "3", "--no-svg",
        "--out", tmp_path / "over",
    )
    assert code == EXIT_OK
    assert out["iterations"] == "3"
    rows = list(csv.DictReader(open(tmp_path / "over" / "energy.csv")))
    assert list(rows[0]) == ["iteration", "E", "H_r", "g", "step_spatial", "step_directional", "accepted"]
    assert len(rows) == 4
    assert not (tmp_path / "over" / "overlay.svg").exists()
    assert json.loads((tmp_path / "over" / "result.json").read_text())["config"]["lambda"] == 10.0


def test_register_unknown_key_rejected_before_compute(tmp_path, capsys):
    code, _, err = run(capsys, "register", _write_config(tmp_path, sigmaa=1.0))
    assert code == EXIT_INPUT
    assert "sigmaa" in err
    assert not (tmp_path / "run").exists()


@pytest.mark.parametrize("bad", [{"lambda": -1}, {"steps": "many"}, {"gamma": "cauchy"}, {"action": "rigid"}])
def test_register_invalid_values(tmp_path, capsys, bad):
    code, _, _ = run(capsys, "register", _write_config(tmp_path, **bad))
    assert code == EXIT_INPUT


def test_register_missing_input_file(tmp_path, capsys):
    code, _, err = run(capsys, "register", _write_config(tmp_path))
    assert code == EXIT_INPUT
    assert "a.json" in err


def test_register_no_descent_exit_code(tmp_path, capsys, monkeypatch):
    from varmatch import optimizer

    real = optimizer._Shooter.energy_and_gradient
    monkeypatch.setattr(
        optimizer._Shooter, "energy_and_gradient", lambda self, p0: (lambda e, g: (e, -g))(*real(self, p0))
    )
    rng = np.random.default_rng(6)
    io.save_varifold(random_varifold(rng, 2, 2, 0.3), tmp_path / "a.json")
    io.save_varifold(random_varifold(rng, 2, 2, 0.3), tmp_path / "b.json")
    code, out, _ = run(capsys, "register", _write_config(tmp_path, max_iter=30))
    assert code == EXIT_NO_DESCENT
    assert out["status"] == "no-descent"
