"""Multi-view mesh reconstruction with a differentiable deferred-shading renderer."""

from .camera import Camera, SceneNormalization, View, load_dataset, visual_hull
from .mesh import ConnectivityCache, Mesh, build_connectivity
from .optim import (
    LossWeights,
    OptimConfig,
    RunReport,
    run_reconstruction,
    run_refinement,
)
from .shader import ShaderParams, init_params, load_checkpoint, save_checkpoint

__all__ = [
    "Camera",
    "ConnectivityCache",
    "LossWeights",
    "Mesh",
    "OptimConfig",
    "RunReport",
    "SceneNormalization",
    "ShaderParams",
    "View",
    "build_connectivity",
    "init_params",
    "load_checkpoint",
    "load_dataset",
    "run_reconstruction",
    "run_refinement",
    "save_checkpoint",
    "visual_hull",
]

__version__ = "0.1.0"
