"""Explicit 3D Gaussian scenes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numcore import Tensor, as_tensor, ops, stop_gradient
from .camera import Camera


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for ``(..., 4)`` quaternions in ``wxyz`` order (renormalized)."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], axis=-1)
    return R.reshape(q.shape[:-1] + (3, 3))


def rotmat_to_quat(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`quat_to_rotmat` for a single matrix (w >= 0)."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return q if q[0] >= 0 else -q


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


@dataclass
class Gaussian:
    """A single primitive; fields follow the scene layout."""

    mean: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    color: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_scale, dtype=np.float64))

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))


def gaussian_normal(g: Gaussian, cam: Camera | None = None) -> np.ndarray:
    """Unit shortest-axis direction of ``g`` in world coordinates.

    Equal minimal scales resolve to the lowest axis index. With ``cam`` the
    normal is flipped to face the camera center.
    """
    R = quat_to_rotmat(np.asarray(g.rotation, dtype=np.float64))
    axis = int(np.argmin(np.asarray(g.log_scale, dtype=np.float64)))
    n = R[:, axis].copy()
    n /= np.linalg.norm(n)
    if cam is not None and np.dot(n, cam.center - np.asarray(g.mean, dtype=np.float64)) < 0:
        n = -n
    return n


def gaussian_normals(rotations: np.ndarray, log_scales: np.ndarray) -> np.ndarray:
    """Batched unoriented shortest-axis normals, ``(N, 3)``."""
    R = quat_to_rotmat(rotations)
    axis = np.argmin(np.asarray(log_scales), axis=1)
    return np.take_along_axis(R, axis[:, None, None].repeat(3, axis=1), axis=2)[..., 0]


@dataclass
class GaussianScene:
    """Per-primitive fields stored as (possibly differentiable) tensors.

    ``colors`` hold activated RGB in [0, 1]. ``source_view``/``source_pixel``
    tag pixel-aligned primitives with the view and pixel they were decoded
    from (view -1 means untagged). ``labels`` is free-form integer metadata.
    """

    means: Tensor
    log_scales: Tensor
    rotations: Tensor
    opacity_logits: Tensor
    colors: Tensor
    source_view: np.ndarray | None = None
    source_pixel: np.ndarray | None = None
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.means = as_tensor(self.means)
        self.log_scales = as_tensor(self.log_scales)
        self.rotations = as_tensor(self.rotations)
        self.opacity_logits = as_tensor(self.opacity_logits)
        self.colors = as_tensor(self.colors)
        n = self.means.shape[0]
        for name, width in (("means", 3), ("log_scales", 3), ("rotations", 4), ("colors", 3)):
            t = getattr(self, name)
            if t.shape != (n, width):
                raise ValueError(f"{name} must have shape ({n}, {width}), got {t.shape}")
        if self.opacity_logits.shape != (n,):
            raise ValueError(f"opacity_logits must have shape ({n},), got {self.opacity_logits.shape}")

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def has_source_tags(self) -> bool:
        return self.source_view is not None and self.source_pixel is not None

    def fields(self) -> tuple[Tensor, ...]:
        return self.means, self.log_scales, self.rotations, self.opacity_logits, self.colors

    def detach(self) -> "GaussianScene":
        return GaussianScene(*(stop_gradient(t) for t in self.fields()),
                             source_view=self.source_view, source_pixel=self.source_pixel,
                             labels=self.labels, meta=dict(self.meta))

    def numpy(self) -> dict[str, np.ndarray]:
        return {"means": self.means.data, "log_scales": self.log_scales.data,
                "rotations": self.rotations.data, "opacity_logits": self.opacity_logits.data,
                "colors": self.colors.data}

    def gaussian(self, i: int) -> Gaussian:
        return Gaussian(self.means.data[i].copy(), self.log_scales.data[i].copy(),
                        self.rotations.data[i].copy(), float(self.opacity_logits.data[i]),
                        self.colors.data[i].copy())

    @classmethod
    def from_gaussians(cls, gs: list[Gaussian]) -> "GaussianScene":
        return cls(np.array([g.mean for g in gs], dtype=np.float64).reshape(-1, 3),
                   np.array([g.log_scale for g in gs], dtype=np.float64).reshape(-1, 3),
                   np.array([g.rotation for g in gs], dtype=np.float64).reshape(-1, 4),
                   np.array([g.opacity_logit for g in gs], dtype=np.float64).reshape(-1),
                   np.array([g.color for g in gs], dtype=np.float64).reshape(-1, 3))

    def extent(self) -> float:
        """Diagonal length of the axis-aligned bounding box of the means."""
        m = self.means.data
        return float(np.linalg.norm(m.max(axis=0) - m.min(axis=0))) if len(m) else 0.0

    def transformed(self, rot: np.ndarray, trans: np.ndarray) -> "GaussianScene":
        """Rigidly move the scene: ``x -> rot @ x + trans`` (constant tensors)."""
        q = rotmat_to_quat(rot)
        return GaussianScene(self.means.data @ rot.T + trans, self.log_scales.data.copy(),
                             quat_multiply(q, self.rotations.data), self.opacity_logits.data.copy(),
                             self.colors.data.copy(), source_view=self.source_view,
                             source_pixel=self.source_pixel, labels=self.labels)


def concat_scenes(scenes: list[GaussianScene]) -> GaussianScene:
    views = None
    if all(s.has_source_tags for s in scenes):
        views = np.concatenate([s.source_view for s in scenes])
        pix = np.concatenate([s.source_pixel for s in scenes])
    return GaussianScene(*(ops.concat([getattr(s, f) for s in scenes], axis=0)
                           for f in ("means", "log_scales", "rotations", "opacity_logits", "colors")),
                         source_view=views, source_pixel=pix if views is not None else None)
