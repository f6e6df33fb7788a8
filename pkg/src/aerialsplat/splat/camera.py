"""Pinhole cameras with world-to-camera extrinsics.

Pixel ``(x, y)`` (column, row) has its center at integer coordinates, so the
principal point of a ``W x H`` camera is conventionally ``(W/2, H/2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray
    T: np.ndarray
    width: int
    height: int
    near: float = 0.05
    far: float = 100.0

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        T = np.asarray(self.T, dtype=np.float64).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)
        if np.abs(R.T @ R - np.eye(3)).max() >= 1e-9:
            raise CameraError("R is not orthonormal")
        if not (self.far > self.near > 0):
            raise CameraError(f"need far > near > 0, got near={self.near} far={self.far}")
        if self.width <= 0 or self.height <= 0:
            raise CameraError("image size must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.R.T @ self.T

    @property
    def forward(self) -> np.ndarray:
        """Optical axis (camera +z) expressed in world coordinates."""
        return self.R[2].copy()

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.T

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "R": self.R.reshape(-1).tolist(), "T": self.T.tolist(),
                "width": self.width, "height": self.height, "near": self.near, "far": self.far}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
                   R=np.array(d["R"], dtype=np.float64).reshape(3, 3), T=np.array(d["T"], dtype=np.float64),
                   width=int(d["width"]), height=int(d["height"]), near=float(d["near"]), far=float(d["far"]))


def look_at(eye, target, up=(0.0, 0.0, 1.0), *, width: int, height: int, fov_deg: float = 60.0,
            near: float = 0.05, far: float = 100.0) -> Camera:
    """Camera at ``eye`` looking at ``target``; image y runs opposite to ``up``."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        # looking straight along ``up``: pick world +x as image right
        right = np.array([1.0, 0.0, 0.0]) - fwd * fwd[0]
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, R=R, T=-R @ eye,
                  width=width, height=height, near=near, far=far)


@dataclass
class Reprojection:
    pixel: np.ndarray
    depth: np.ndarray
    behind: np.ndarray = field(default=None)


def reproject(points, cam: Camera) -> Reprojection:
    """Project world points (``(3,)`` or ``(N, 3)``) to pixels and camera depth."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pc = cam.world_to_camera(pts.reshape(-1, 3))
    z = pc[:, 2]
    behind = z <= 1e-9
    zs = np.where(behind, 1.0, z)
    u = np.stack([cam.fx * pc[:, 0] / zs + cam.cx, cam.fy * pc[:, 1] / zs + cam.cy], axis=-1)
    if single:
        return Reprojection(u[0], z[0], bool(behind[0]))
    return Reprojection(u, z, behind)


def pixel_grid(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.meshgrid(np.arange(cam.height, dtype=np.float64),
                         np.arange(cam.width, dtype=np.float64), indexing="ij")
    return xs, ys


def backproject(depth, cam: Camera, valid=None) -> tuple[np.ndarray, np.ndarray]:
    """Lift a z-depth map to world points ``(H, W, 3)``; returns ``(points, valid)``.

    Pixels with non-positive depth, or outside ``valid``, are marked invalid
    (their points are still computed but meaningless).
    """
    depth = np.asarray(depth, dtype=np.float64)
    ok = depth > 0
    if valid is not None:
        ok &= np.asarray(valid, dtype=bool)
    xs, ys = pixel_grid(cam)
    pc = np.stack([(xs - cam.cx) / cam.fx * depth, (ys - cam.cy) / cam.fy * depth, depth], axis=-1)
    world = (pc - cam.T) @ cam.R  # R^-1 (p - T) with R orthonormal
    return world, ok


def pixel_rays(cam: Camera) -> np.ndarray:
    """Unit ray directions (world frame) through every pixel center, ``(H, W, 3)``."""
    xs, ys = pixel_grid(cam)
    d = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(xs)], axis=-1)
    d = d @ cam.R
    return d / np.linalg.norm(d, axis=-1, keepdims=True)
