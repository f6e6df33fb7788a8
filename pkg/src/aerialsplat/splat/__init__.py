"""Gaussian scenes, cameras and the differentiable splat renderer."""
from .camera import Camera, CameraError, Reprojection, backproject, look_at, pixel_grid, pixel_rays, reproject
from .gaussians import (Gaussian, GaussianScene, concat_scenes, gaussian_normal, gaussian_normals,
                        quat_multiply, quat_to_rotmat, rotmat_to_quat)
from .raster import rasterize
from .reference import render_reference
from .render import RenderOptions, RenderOutput, Splat2D, project_gaussian, project_scene, render

__all__ = [
    "Camera", "CameraError", "Gaussian", "GaussianScene", "RenderOptions", "RenderOutput", "Reprojection",
    "Splat2D", "backproject", "concat_scenes", "gaussian_normal", "gaussian_normals", "look_at",
    "pixel_grid", "pixel_rays", "project_gaussian", "project_scene", "quat_multiply", "quat_to_rotmat",
    "rasterize", "render", "render_reference", "reproject", "rotmat_to_quat",
]
