"""Objective assembly and the coarse-to-fine optimization loops.

The objective is a weighted sum of four terms: an L1 shading loss on sampled
foreground pixels, an L1 silhouette loss on the full antialiased mask, and
two geometric regularizers (uniform Laplacian magnitude and neighboring face
normal consistency). Vertices and shader weights are updated with Adam; the
mesh is periodically remeshed toward half its current mean edge length while
the regularizer weights grow and the vertex step shrinks.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .camera import View, visual_hull
from .mesh import (
    ConnectivityCache,
    Mesh,
    build_connectivity,
    is_manifold,
    laplacian_loss,
    normal_consistency_loss,
    vertex_normals,
)
from .raster import (
    interpolate_attributes,
    interpolate_backward,
    rasterize,
    silhouette_backward,
    silhouette_mask,
)
from .remesh import remesh
from .shader import ShaderParams, init_params, shade_backward, shade_with_context

log = logging.getLogger(__name__)

PHASES = ("rasterize", "shade", "losses", "backward", "step", "remesh")


@dataclass
class LossWeights:
    shading: float = 1.0
    silhouette: float = 2.0
    laplacian: float = 40.0
    normal: float = 0.1

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be non-negative")

    def with_regularizers_scaled(self, factor: float) -> "LossWeights":
        return LossWeights(self.shading, self.silhouette,
                           self.laplacian * factor, self.normal * factor)


@dataclass
class OptimConfig:
    iterations: int = 2000
    remesh_iterations: tuple[int, ...] = (500, 1000, 1500)
    views_per_iteration: int = 1
    pixel_fraction: float = 0.75
    lr_vertices: float = 1e-3
    lr_shader: float = 1e-3
    regularizer_growth: float = 4.0
    vertex_step_decay: float = 0.75
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        self.remesh_iterations = tuple(sorted(int(i) for i in self.remesh_iterations))
        if self.iterations < 0:
            raise ValueError("iteration count must be non-negative")
        for i in self.remesh_iterations:
            if not 0 < i < self.iterations:
                raise ValueError("remesh iterations must lie strictly inside the run")
        if not 0.0 < self.pixel_fraction <= 1.0:
            raise ValueError("pixel fraction must be in (0, 1]")
        if self.views_per_iteration < 1:
            raise ValueError("need at least one view per iteration")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["remesh_iterations"] = list(self.remesh_iterations)
        d["v"] = 1
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimConfig":
        d = dict(d)
        version = d.pop("v", 1)
        if version != 1:
            raise ValueError(f"unsupported config version {version}")
        return cls(**d)


def refinement_config(**overrides) -> OptimConfig:
    """Defaults for refining an existing mesh: the shader moves faster than
    the geometry, and the mesh is upsampled once."""
    base = dict(iterations=1000, remesh_iterations=(500,),
                lr_vertices=1e-4, lr_shader=2e-3)
    base.update(overrides)
    return OptimConfig(**base)


class AdamState:
    """First/second moment accumulators for a named parameter group."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Standard Adam update with bias correction, in place.

    A parameter whose gradient is non-finite keeps its value and moments for
    this step (logged); the step counter still advances once per call.
    """
    state.t += 1
    t = state.t
    for key, p in params.items():
        g = grads[key]
        if not np.all(np.isfinite(g)):
            log.warning("non-finite gradient for %r; step rejected", key)
            continue
        m = state.m[key]
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def sample_pixels(rendered_mask: np.ndarray, input_mask: np.ndarray,
                  fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample (without replacement) of ceil(fraction * |I|) pixels
    from the intersection I of the rendered and input masks; (k, 2) rows/cols."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    inter = (rendered_mask > 0.5) & (input_mask > 0.5)
    rows, cols = np.nonzero(inter)
    n = len(rows)
    if n == 0:
        return np.zeros((0, 2), dtype=np.int64)
    k = int(np.ceil(fraction * n))
    idx = rng.choice(n, size=k, replace=False)
    idx.sort()
    return np.stack([rows[idx], cols[idx]], axis=1)


@dataclass
class ObjectiveResult:
    total: float
    terms: dict[str, float]
    grad_vertices: np.ndarray
    grad_shader: dict[str, np.ndarray]
    timings: dict[str, float] = field(default_factory=dict)


def total_objective(mesh: Mesh, cache: ConnectivityCache, params: ShaderParams,
                    view: View, weights: LossWeights,
                    pixels: np.ndarray | None = None,
                    rng: np.random.Generator | None = None,
                    pixel_fraction: float = 0.75) -> ObjectiveResult:
    """One stochastic evaluation of the full objective with all gradients.

    The shading term is the mean absolute color error over the sampled
    pixels; its vertex gradient flows through the interpolated positions and
    normals under the fixed pixel-to-triangle assignment of this evaluation.
    The silhouette term compares the antialiased mask with the input mask
    over every pixel and carries the only gradient that moves silhouettes.
    """
    cache.check(mesh)
    timings = {p: 0.0 for p in PHASES}
    clock = time.perf_counter

    t0 = clock()
    gbuffer = rasterize(mesh, view.camera)
    sil, sil_ctx = silhouette_mask(mesh, view.camera, gbuffer=gbuffer)
    timings["rasterize"] = clock() - t0

    if pixels is None:
        if rng is None:
            rng = np.random.default_rng(0)
        t0 = clock()
        pixels = sample_pixels(gbuffer.coverage, view.mask, pixel_fraction, rng)
        timings["rasterize"] += clock() - t0

    grad_V = np.zeros_like(mesh.vertices)
    grad_theta = {k: np.zeros_like(w) for k, w in params.weights.items()}
    terms: dict[str, float] = {}

    # shading term
    t0 = clock()
    if len(pixels) == 0:
        log.warning("empty mask intersection for view %d; shading term skipped",
                    view.view_id)
        terms["shading"] = 0.0
        sctx = ictx = None
        timings["shade"] = clock() - t0
    else:
        vnormals, _ = vertex_normals(mesh)
        gbuffer, ictx = interpolate_attributes(gbuffer, mesh, vnormals, pixels)
        rows, cols = pixels[:, 0], pixels[:, 1]
        x = gbuffer.position[rows, cols]
        n = gbuffer.normal[rows, cols]
        w = gbuffer.view_dir[rows, cols]
        rgb, sctx = shade_with_context(params, x, n, w)
        timings["shade"] = clock() - t0

        t0 = clock()
        m_tilde = sil[rows, cols][:, None]
        residual = m_tilde * rgb - view.image[rows, cols]
        terms["shading"] = weights.shading * float(np.mean(np.abs(residual)))
        grad_rgb = weights.shading * np.sign(residual) * m_tilde / residual.size
        timings["losses"] += clock() - t0

        t0 = clock()
        g_theta, g_x, g_n, _ = shade_backward(params, sctx, grad_rgb)
        for k, g in g_theta.items():
            grad_theta[k] += g
        grad_V += interpolate_backward(ictx, g_x, g_n)
        timings["backward"] += clock() - t0

    # silhouette term over all pixels
    t0 = clock()
    sil_diff = sil - view.mask
    terms["silhouette"] = weights.silhouette * float(np.mean(np.abs(sil_diff)))
    grad_sil = weights.silhouette * np.sign(sil_diff) / sil_diff.size
    timings["losses"] += clock() - t0

    t0 = clock()
    grad_V += silhouette_backward(sil_ctx, grad_sil)
    timings["backward"] += clock() - t0

    # geometric regularizers
    t0 = clock()
    lap, g_lap = laplacian_loss(mesh, cache)
    nc, g_nc = normal_consistency_loss(mesh, cache)
    terms["laplacian"] = weights.laplacian * lap
    terms["normal"] = weights.normal * nc
    grad_V += weights.laplacian * g_lap + weights.normal * g_nc
    timings["losses"] += clock() - t0

    total = sum(terms.values())
    return ObjectiveResult(total, terms, grad_V, grad_theta, timings)


@dataclass
class IterationRecord:
    iteration: int
    total: float
    shading: float
    silhouette: float
    laplacian: float
    normal: float
    n_vertices: int
    times: dict[str, float]
    wall: float = 0.0  # full wall-clock time of the iteration


@dataclass
class RunReport:
    records: list[IterationRecord] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    aborted: str | None = None

    @property
    def loss_trace(self) -> np.ndarray:
        return np.array([r.total for r in self.records])

    def phase_totals(self) -> dict[str, float]:
        totals = {p: 0.0 for p in PHASES}
        for r in self.records:
            for p in PHASES:
                totals[p] += r.times.get(p, 0.0)
        return totals

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "total", "shading", "silhouette", "laplacian",
                 "normal", "n_vertices"] + [f"t_{p}" for p in PHASES]
                + ["t_wall"])
            for r in self.records:
                writer.writerow(
                    [r.iteration, r.total, r.shading, r.silhouette,
                     r.laplacian, r.normal, r.n_vertices]
                    + [r.times.get(p, 0.0) for p in PHASES] + [r.wall])

    def summary(self) -> dict:
        last = self.records[-1] if self.records else None
        return {
            "v": 1,
            "iterations": len(self.records),
            "wall_time_s": self.wall_time,
            "phase_time_s": self.phase_totals(),
            "final_losses": None if last is None else {
                "total": last.total, "shading": last.shading,
                "silhouette": last.silhouette, "laplacian": last.laplacian,
                "normal": last.normal,
            },
            "final_vertex_count": None if last is None else last.n_vertices,
            "events": self.events,
            "aborted": self.aborted,
        }

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def run_reconstruction(views: list[View], config: OptimConfig | None = None,
                       weights: LossWeights | None = None,
                       initial_mesh: Mesh | None = None,
                       shader_params: ShaderParams | None = None,
                       hull_resolution: int = 32,
                       progress=None):
    """Full coarse-to-fine reconstruction from calibrated masked images.

    Starts from the visual hull (or initial_mesh), alternately samples a view
    and takes Adam steps on vertices and shader weights, and remeshes toward
    half the current mean edge length at the scheduled iterations. Returns
    (mesh, shader_params, report). If remeshing ever tangles the mesh the run
    aborts and the last good mesh is returned with report.aborted set.
    """
    if config is None:
        config = OptimConfig()
    if weights is None:
        weights = LossWeights()
    rng = np.random.default_rng(config.seed)

    mesh = initial_mesh.copy() if initial_mesh is not None else visual_hull(views, hull_resolution)
    params = shader_params.copy() if shader_params is not None else init_params(seed=config.seed)
    cache = build_connectivity(mesh)

    lr_v = config.lr_vertices
    lr_s = config.lr_shader
    adam_v = AdamState({"V": mesh.vertices})
    adam_s = AdamState(params.weights)
    report = RunReport()
    remesh_at = set(config.remesh_iterations)
    start = time.perf_counter()

    for it in range(1, config.iterations + 1):
        t_iter = time.perf_counter()
        times = {p: 0.0 for p in PHASES}
        totals = {"shading": 0.0, "silhouette": 0.0, "laplacian": 0.0, "normal": 0.0}
        grad_V = np.zeros_like(mesh.vertices)
        grad_theta = {k: np.zeros_like(w) for k, w in params.weights.items()}

        diverged = False
        for _ in range(config.views_per_iteration):
            view = views[int(rng.integers(len(views)))]
            res = total_objective(mesh, cache, params, view, weights,
                                  rng=rng, pixel_fraction=config.pixel_fraction)
            if not np.isfinite(res.total):
                diverged = True
                break
            for p in PHASES:
                times[p] += res.timings.get(p, 0.0)
            for k in totals:
                totals[k] += res.terms[k] / config.views_per_iteration
            grad_V += res.grad_vertices / config.views_per_iteration
            for k in grad_theta:
                grad_theta[k] += res.grad_shader[k] / config.views_per_iteration

        if diverged:
            report.events.append(f"iteration {it}: non-finite loss, step skipped")
            log.warning("iteration %d produced a non-finite loss; step skipped", it)
        else:
            t0 = time.perf_counter()
            adam_step(adam_v, {"V": mesh.vertices}, {"V": grad_V}, lr_v,
                      config.beta1, config.beta2, config.eps)
            adam_step(adam_s, params.weights, grad_theta, lr_s,
                      config.beta1, config.beta2, config.eps)
            times["step"] = time.perf_counter() - t0

        if it in remesh_at:
            t0 = time.perf_counter()
            try:
                target = 0.5 * mesh.mean_edge_length()
                new_mesh = remesh(mesh, target)
                if not is_manifold(new_mesh):
                    raise RuntimeError("remeshing produced a non-manifold mesh")
            except RuntimeError as exc:
                report.aborted = f"iteration {it}: {exc}"
                log.error("aborting: %s", report.aborted)
                report.wall_time = time.perf_counter() - start
                return mesh, params, report
            mesh = new_mesh
            cache = build_connectivity(mesh)
            weights = weights.with_regularizers_scaled(config.regularizer_growth)
            lr_v *= config.vertex_step_decay
            adam_v = AdamState({"V": mesh.vertices})
            times["remesh"] = time.perf_counter() - t0
            report.events.append(
                f"iteration {it}: remeshed to {mesh.n_vertices} vertices")

        report.records.append(IterationRecord(
            iteration=it, total=sum(totals.values()), n_vertices=mesh.n_vertices,
            times=times, wall=time.perf_counter() - t_iter, **totals))
        if progress is not None:
            progress(it, report.records[-1])

    report.wall_time = time.perf_counter() - start
    return mesh, params, report


def run_refinement(views: list[View], initial_mesh: Mesh,
                   config: OptimConfig | None = None,
                   weights: LossWeights | None = None,
                   shader_params: ShaderParams | None = None,
                   progress=None):
    """Refine an existing manifold mesh; geometry moves gently while the
    shader trains fast. Defaults: 1000 iterations, one remesh at 500."""
    if config is None:
        config = refinement_config()
    if not is_manifold(initial_mesh):
        raise ValueError("refinement requires a manifold input mesh")
    return run_reconstruction(views, config, weights, initial_mesh,
                              shader_params, progress=progress)
