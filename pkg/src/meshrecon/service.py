"""Local HTTP render service for the interactive viewer.

One mesh + shader checkpoint per process, loaded at startup and never
mutated; every response is a pure function of the request, so concurrent
requests are safe and deterministic.
"""

from __future__ import annotations

import io
from typing import Literal

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from PIL import Image
from pydantic import BaseModel, Field, model_validator

from .analysis import (
    FeatureEdit,
    HalfSpaceSelector,
    SphereSelector,
    pick_feature,
    render_novel_view,
    render_with_feature_edit,
)
from .camera import Camera, make_orbit_camera
from .mesh import Mesh
from .shader import ShaderParams, extract_positional_features

MAX_RESOLUTION = 1024


class OrbitModel(BaseModel):
    azimuth_deg: float
    elevation_deg: float
    radius: float = Field(gt=0.0)
    target: list[float] = Field(default=[0.0, 0.0, 0.0], min_length=3, max_length=3)
    focal: float | None = Field(default=None, gt=0.0)


class ExplicitModel(BaseModel):
    k: list[list[float]]
    r: list[list[float]]
    t: list[float] = Field(min_length=3, max_length=3)


class SelectorModel(BaseModel):
    kind: Literal["sphere", "halfspace"]
    center: list[float] | None = None
    radius: float | None = None
    point: list[float] | None = None
    normal: list[float] | None = None

    @model_validator(mode="after")
    def check_fields(self):
        if self.kind == "sphere" and (self.center is None or self.radius is None):
            raise ValueError("sphere selector needs center and radius")
        if self.kind == "halfspace" and (self.point is None or self.normal is None):
            raise ValueError("halfspace selector needs point and normal")
        return self

    def build(self):
        if self.kind == "sphere":
            return SphereSelector(tuple(self.center), self.radius)
        return HalfSpaceSelector(tuple(self.point), tuple(self.normal))


class EditModel(BaseModel):
    selector: SelectorModel
    replacement: list[float]
    blend: float = Field(default=1.0, ge=0.0, le=1.0)


class RenderRequestModel(BaseModel):
    v: int = 1
    orbit: OrbitModel | None = None
    explicit: ExplicitModel | None = None
    width: int = Field(default=256, ge=1)
    height: int = Field(default=256, ge=1)
    edit: EditModel | None = None

    @model_validator(mode="after")
    def exactly_one_camera(self):
        if (self.orbit is None) == (self.explicit is None):
            raise ValueError("provide exactly one of orbit or explicit camera")
        return self


class PickRequestModel(BaseModel):
    v: int = 1
    orbit: OrbitModel | None = None
    explicit: ExplicitModel | None = None
    width: int = Field(default=256, ge=1)
    height: int = Field(default=256, ge=1)
    pixel: list[int] = Field(min_length=2, max_length=2)  # row, col

    @model_validator(mode="after")
    def exactly_one_camera(self):
        if (self.orbit is None) == (self.explicit is None):
            raise ValueError("provide exactly one of orbit or explicit camera")
        return self


def _build_camera(req, width: int, height: int) -> Camera:
    if req.orbit is not None:
        o = req.orbit
        return make_orbit_camera(o.azimuth_deg, o.elevation_deg, o.radius,
                                 o.target, width, height, o.focal)
    e = req.explicit
    return Camera(np.asarray(e.k, dtype=np.float64),
                  np.asarray(e.r, dtype=np.float64),
                  np.asarray(e.t, dtype=np.float64), width, height)


def _png_bytes(image: np.ndarray) -> bytes:
    arr = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def create_app(mesh: Mesh, params: ShaderParams,
               max_resolution: int = MAX_RESOLUTION) -> FastAPI:
    app = FastAPI(title="meshrecon render service")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        # malformed request bodies get a field-level 400 rather than the
        # framework's default 422, which we reserve for oversized renders
        fields = [
            {"field": ".".join(str(p) for p in err["loc"] if p != "body"),
             "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400,
                            content={"v": 1, "error": "invalid request",
                                     "fields": fields})

    bounds_min = mesh.vertices.min(axis=0)
    bounds_max = mesh.vertices.max(axis=0)
    surface_mean = extract_positional_features(params, mesh.vertices).mean(axis=0)
    presets = {
        "surface_mean": surface_mean.tolist(),
        "zero": [0.0] * params.feature_dim,
    }

    @app.get("/meta")
    async def meta():
        return {
            "v": 1,
            "n_vertices": mesh.n_vertices,
            "n_faces": mesh.n_faces,
            "bounds_min": bounds_min.tolist(),
            "bounds_max": bounds_max.tolist(),
            "feature_dim": params.feature_dim,
            "encoding": params.encoding.kind,
            "activation": params.activation,
            "h_layer_sizes": params.h_layer_sizes,
            "c_layer_sizes": params.c_layer_sizes,
            "max_resolution": max_resolution,
            "feature_presets": presets,
        }

    @app.post("/render")
    async def render(req: RenderRequestModel):
        if req.width > max_resolution or req.height > max_resolution:
            return JSONResponse(
                status_code=422,
                content={"v": 1, "error": "resolution exceeds maximum",
                         "max_resolution": max_resolution})
        camera = _build_camera(req, req.width, req.height)
        if req.edit is None:
            image, _ = render_novel_view(mesh, params, camera)
        else:
            edit = FeatureEdit(req.edit.selector.build(),
                               np.asarray(req.edit.replacement), req.edit.blend)
            if edit.replacement.shape != (params.feature_dim,):
                return JSONResponse(
                    status_code=400,
                    content={"v": 1, "error": "invalid request", "fields": [
                        {"field": "edit.replacement",
                         "message": f"expected {params.feature_dim} values"}]})
            image, _ = render_with_feature_edit(mesh, params, camera, edit)
        return Response(content=_png_bytes(image), media_type="image/png")

    @app.post("/pick-feature")
    async def pick(req: PickRequestModel):
        if req.width > max_resolution or req.height > max_resolution:
            return JSONResponse(
                status_code=422,
                content={"v": 1, "error": "resolution exceeds maximum",
                         "max_resolution": max_resolution})
        camera = _build_camera(req, req.width, req.height)
        try:
            feature, point = pick_feature(mesh, params, camera,
                                          (req.pixel[0], req.pixel[1]))
        except ValueError as exc:
            return JSONResponse(status_code=404,
                                content={"v": 1, "error": "no surface",
                                         "detail": str(exc)})
        return {"v": 1, "feature": feature.tolist(), "point": point.tolist()}

    return app
