import json

import numpy as np
import pytest
from click.testing import CliRunner

from meshrecon.camera import load_dataset, visual_hull
from meshrecon.cli import main
from meshrecon.obj_io import load_mesh, save_mesh
from meshrecon.shader import init_params, save_checkpoint
from meshrecon.shapes import icosphere
from meshrecon.synth import SyntheticSceneSpec, write_dataset


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "sphere"
    write_dataset(SyntheticSceneSpec(n_views=4, resolution=48), root)
    return root


@pytest.fixture(scope="module")
def model_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("model")
    mesh = icosphere(2, 0.7)
    params = init_params(seed=5, h_layers=2, h_width=32, feature_dim=32,
                         c_width=32)
    rng = np.random.default_rng(8)
    params.weights["c2.W"] += 0.3 * rng.standard_normal(params.weights["c2.W"].shape)
    save_mesh(mesh, root / "mesh.obj")
    save_checkpoint(params, root / "shader.npz")
    return root


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


class TestReconstruct:
    def test_outputs_and_report_rows(self, dataset, tmp_path):
        out = tmp_path / "run"
        res = run("reconstruct", "--data", dataset, "--out", out,
                  "--iterations", 2, "--hull-resolution", 16, "--quiet")
        assert res.exit_code == 0, res.output
        for name in ("mesh.obj", "shader.npz", "report.csv", "summary.json"):
            assert (out / name).exists()
        rows = (out / "report.csv").read_text().strip().splitlines()
        assert len(rows) == 3  # header + 2 iterations
        assert json.loads((out / "summary.json").read_text())["iterations"] == 2

    def test_missing_dataset_exit_2(self, tmp_path):
        res = run("reconstruct", "--data", tmp_path / "nope", "--out",
                  tmp_path / "o")
        assert res.exit_code == 2
        assert "nope" in res.output

    def test_zero_iterations_returns_hull(self, dataset, tmp_path):
        out = tmp_path / "hull_run"
        res = run("reconstruct", "--data", dataset, "--out", out,
                  "--iterations", 0, "--hull-resolution", 16, "--quiet")
        assert res.exit_code == 0, res.output
        written = load_mesh(out / "mesh.obj")
        views, _ = load_dataset(dataset)
        hull = visual_hull(views, 16)
        assert written.n_vertices == hull.n_vertices
        assert np.allclose(written.vertices, hull.vertices, atol=1e-8)


class TestRefine:
    def test_runs(self, dataset, model_files, tmp_path):
        out = tmp_path / "refined"
        res = run("refine", "--data", dataset, "--mesh",
                  model_files / "mesh.obj", "--out", out,
                  "--iterations", 2, "--quiet")
        assert res.exit_code == 0, res.output
        assert (out / "mesh.obj").exists()


class TestRender:
    def test_writes_png_matching_service(self, model_files, tmp_path):
        out = tmp_path / "frame.png"
        res = run("render", "--mesh", model_files / "mesh.obj",
                  "--shader", model_files / "shader.npz",
                  "--azimuth", 30, "--elevation", 10, "--radius", 3,
                  "--width", 64, "--height", 64, "--out", out)
        assert res.exit_code == 0, res.output

        from fastapi.testclient import TestClient

        from meshrecon.service import create_app
        from meshrecon.shader import load_checkpoint

        app = create_app(load_mesh(model_files / "mesh.obj"),
                         load_checkpoint(model_files / "shader.npz"))
        client = TestClient(app)
        served = client.post("/render", json={
            "v": 1, "orbit": {"azimuth_deg": 30, "elevation_deg": 10,
                              "radius": 3.0},
            "width": 64, "height": 64}).content
        assert out.read_bytes() == served


class TestEvaluate:
    def test_report_json(self, model_files, tmp_path):
        out = tmp_path / "eval.json"
        res = run("evaluate", "--mesh", model_files / "mesh.obj",
                  "--reference", model_files / "mesh.obj",
                  "--samples", 500, "--out", out)
        assert res.exit_code == 0, res.output
        rep = json.loads(out.read_text())
        assert rep["mean_surface_distance"] < 1e-9
        assert set(rep["chamfer"]) == {"a_to_b", "b_to_a", "symmetric"}


class TestAnalyze:
    def test_outputs(self, model_files, tmp_path):
        out = tmp_path / "analysis"
        res = run("analyze", "--shader", model_files / "shader.npz",
                  "--mesh", model_files / "mesh.obj",
                  "--samples", 200, "--out", out)
        assert res.exit_code == 0, res.output
        assert (out / "pca.csv").exists()
        assert (out / "pca.png").exists()
        meta = json.loads((out / "pca.json").read_text())
        assert len(meta["explained_variance"]) == 2


class TestSynth:
    def test_generates_dataset(self, tmp_path):
        out = tmp_path / "ds"
        res = run("synth", "--kind", "sphere", "--views", 3,
                  "--resolution", 32, "--out", out)
        assert res.exit_code == 0, res.output
        views, _ = load_dataset(out)
        assert len(views) == 3

    def test_spec_file(self, tmp_path):
        spec = {"kind": "two_material", "n_views": 2, "resolution": 32}
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        out = tmp_path / "ds2"
        res = run("synth", "--spec", spec_path, "--out", out)
        assert res.exit_code == 0, res.output
        assert (out / "image_0001.png").exists()
