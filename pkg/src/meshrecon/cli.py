"""Command-line entry points for reconstruction, refinement, rendering,
evaluation, shader analysis, synthetic data generation, and the render
service."""

from __future__ import annotations

import csv
import json
import os
import sys
import tempfile
from pathlib import Path

import click
import numpy as np

from .analysis import (
    evaluation_report,
    pca_positional_features,
    render_novel_view,
    sample_surface,
)
from .camera import DatasetError, load_dataset, make_orbit_camera
from .obj_io import load_mesh, save_mesh
from .optim import (
    LossWeights,
    OptimConfig,
    refinement_config,
    run_reconstruction,
    run_refinement,
)
from .shader import init_params, load_checkpoint, save_checkpoint
from .synth import SyntheticSceneSpec, write_dataset

CONFIG_ENV = "MESHRECON_CONFIG"


def _atomic_write(path: Path, writer) -> None:
    """Run writer(temp_path), then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=path.suffix)
    os.close(fd)
    try:
        writer(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(config_path, iterations, seed) -> OptimConfig:
    path = config_path or os.environ.get(CONFIG_ENV)
    if path:
        cfg = OptimConfig.from_dict(json.loads(Path(path).read_text()))
    else:
        cfg = OptimConfig()
    overrides = {}
    if iterations is not None:
        overrides["iterations"] = iterations
        # drop scheduled remeshes that no longer fit the shortened run
        overrides["remesh_iterations"] = tuple(
            i for i in cfg.remesh_iterations if i < max(iterations, 1))
        if iterations == 0:
            overrides["remesh_iterations"] = ()
    if seed is not None:
        overrides["seed"] = seed
    if overrides:
        d = cfg.to_dict()
        d.update(overrides)
        cfg = OptimConfig.from_dict(d)
    return cfg


def _load_views(data):
    try:
        views, _ = load_dataset(data)
        return views
    except DatasetError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


def _progress_printer(quiet: bool):
    if quiet:
        return None

    def progress(it, rec):
        if it % 50 == 0 or it == 1:
            click.echo(
                f"iter {it:5d}  total {rec.total:.5f}  "
                f"shading {rec.shading:.5f}  silhouette {rec.silhouette:.5f}  "
                f"vertices {rec.n_vertices}")

    return progress


def _write_outputs(out: Path, mesh, params, report):
    out.mkdir(parents=True, exist_ok=True)
    save_mesh(mesh, out / "mesh.obj")  # already atomic
    _atomic_write(out / "shader.npz", lambda p: save_checkpoint(params, p))
    _atomic_write(out / "report.csv", report.to_csv)
    _atomic_write(out / "summary.json", report.write_summary)


@click.group()
def main():
    """Multi-view mesh reconstruction with a learned deferred shader."""


@main.command()
@click.option("--data", required=True, type=click.Path(), help="dataset directory")
@click.option("--out", required=True, type=click.Path(), help="output directory")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--iterations", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--hull-resolution", type=int, default=32)
@click.option("--quiet", is_flag=True)
def reconstruct(data, out, config_path, iterations, seed, hull_resolution, quiet):
    """Reconstruct mesh + shader from a calibrated masked image dataset."""
    views = _load_views(data)
    cfg = _load_config(config_path, iterations, seed)
    try:
        mesh, params, report = run_reconstruction(
            views, cfg, hull_resolution=hull_resolution,
            progress=_progress_printer(quiet))
    except (ValueError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    _write_outputs(Path(out), mesh, params, report)
    if report.aborted:
        click.echo(f"aborted: {report.aborted}", err=True)
        sys.exit(1)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--data", required=True, type=click.Path())
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--iterations", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--quiet", is_flag=True)
def refine(data, mesh_path, out, config_path, iterations, seed, quiet):
    """Refine an existing mesh; the shader trains faster than the geometry."""
    views = _load_views(data)
    if config_path or os.environ.get(CONFIG_ENV):
        cfg = _load_config(config_path, iterations, seed)
    else:
        overrides = {}
        if iterations is not None:
            overrides["iterations"] = iterations
            overrides["remesh_iterations"] = tuple(
                i for i in (500,) if i < max(iterations, 1))
        if seed is not None:
            overrides["seed"] = seed
        cfg = refinement_config(**overrides)
    initial = load_mesh(mesh_path)
    try:
        mesh, params, report = run_refinement(
            views, initial, cfg, progress=_progress_printer(quiet))
    except (ValueError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    _write_outputs(Path(out), mesh, params, report)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--shader", "shader_path", required=True, type=click.Path(exists=True))
@click.option("--azimuth", type=float, default=0.0)
@click.option("--elevation", type=float, default=0.0)
@click.option("--radius", type=float, default=3.0)
@click.option("--width", type=int, default=256)
@click.option("--height", type=int, default=256)
@click.option("--out", required=True, type=click.Path())
def render(mesh_path, shader_path, azimuth, elevation, radius, width, height, out):
    """Render a novel view of a reconstruction to PNG."""
    from PIL import Image

    mesh = load_mesh(mesh_path)
    params = load_checkpoint(shader_path)
    camera = make_orbit_camera(azimuth, elevation, radius, (0, 0, 0),
                               width, height)
    image, _ = render_novel_view(mesh, params, camera)
    arr = (np.clip(image, 0, 1) * 255).round().astype(np.uint8)
    _atomic_write(Path(out), lambda p: Image.fromarray(arr).save(p, format="PNG"))
    click.echo(f"wrote {out}")


@main.command()
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--reference", "ref_path", required=True, type=click.Path(exists=True))
@click.option("--data", type=click.Path(), default=None,
              help="optional dataset for per-view IoU")
@click.option("--samples", type=int, default=10_000)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path())
def evaluate(mesh_path, ref_path, data, samples, seed, out):
    """Chamfer-L1 / surface-distance / IoU report as JSON."""
    mesh = load_mesh(mesh_path)
    reference = load_mesh(ref_path)
    views = _load_views(data) if data else []
    report = evaluation_report(mesh, reference, views, samples=samples, seed=seed)
    _atomic_write(Path(out), lambda p: p.write_text(json.dumps(report, indent=2)))
    click.echo(f"wrote {out}")


def _scatter_png(proj: np.ndarray, path: Path, size: int = 512) -> None:
    """Splat 2D projections into a grayscale scatter image."""
    from PIL import Image

    img = np.full((size, size), 255, dtype=np.uint8)
    span = np.abs(proj).max()
    if span > 0:
        xy = ((proj / span) * (size / 2 - 4) + size / 2).astype(int)
        for x, y in xy:
            img[max(y - 1, 0):y + 2, max(x - 1, 0):x + 2] = 0
    Image.fromarray(img).save(path, format="PNG")


@main.command()
@click.option("--shader", "shader_path", required=True, type=click.Path(exists=True))
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--samples", type=int, default=2000)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path())
def analyze(shader_path, mesh_path, samples, seed, out):
    """PCA of the shader's positional features over the mesh surface."""
    mesh = load_mesh(mesh_path)
    params = load_checkpoint(shader_path)
    points = sample_surface(mesh, samples, seed)
    proj, basis, explained = pca_positional_features(params, points)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def write_csv(p):
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "pc1", "pc2"])
            for pt, pr in zip(points, proj):
                w.writerow([*pt, *pr])

    _atomic_write(out_dir / "pca.csv", write_csv)
    _atomic_write(out_dir / "pca.png", lambda p: _scatter_png(proj, p))
    _atomic_write(out_dir / "pca.json", lambda p: p.write_text(json.dumps({
        "v": 1,
        "explained_variance": explained.tolist(),
        "basis": basis.tolist(),
    }, indent=2)))
    click.echo(f"wrote {out_dir}")


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None)
@click.option("--kind", type=click.Choice(["sphere", "blob", "two_material"]),
              default="sphere")
@click.option("--views", "n_views", type=int, default=16)
@click.option("--resolution", type=int, default=128)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path())
def synth(spec_path, kind, n_views, resolution, seed, out):
    """Generate a synthetic Lambertian dataset with exact reference geometry."""
    if spec_path:
        spec = SyntheticSceneSpec(**json.loads(Path(spec_path).read_text()))
    else:
        spec = SyntheticSceneSpec(kind=kind, n_views=n_views,
                                  resolution=resolution, seed=seed)
    root = write_dataset(spec, out)
    click.echo(f"wrote {root}")


@main.command()
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--shader", "shader_path", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8642)
def serve(mesh_path, shader_path, host, port):
    """Serve /meta, /render and /pick-feature for the interactive viewer."""
    import uvicorn

    from .service import create_app

    app = create_app(load_mesh(mesh_path), load_checkpoint(shader_path))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
