"""Differentiable splat rendering: projection, sorting, compositing."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..numcore import Tensor, ops
from .camera import Camera
from .gaussians import Gaussian, GaussianScene, quat_to_rotmat
from .raster import TILE, rasterize

BLUR = 0.3
DET_MIN = 1e-12


@dataclass(frozen=True)
class RenderOptions:
    alpha_min: float = 1.0 / 255.0
    t_min: float = 1e-4
    blur: float = BLUR
    eps: float = 1e-6
    valid_threshold: float = 0.5
    tile: int = TILE

    def exact(self) -> "RenderOptions":
        """Same options with contribution skipping and early termination off."""
        return replace(self, alpha_min=0.0, t_min=0.0)


@dataclass
class RenderOutput:
    """Rendered maps. ``normal`` is in the camera frame (x right, y down, z forward).

    ``median_depth`` (not differentiable) is the ray depth of the splat at
    which transmittance first drops below 1/2, 0 where that never happens.
    """

    rgb: Tensor
    depth: Tensor
    alpha: Tensor
    normal: Tensor
    s_min: Tensor
    valid: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    median_depth: np.ndarray | None = None


@dataclass
class Splat2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    camera_depth: float


def project_gaussian(g: Gaussian, cam: Camera, blur: float = BLUR) -> Splat2D | None:
    """EWA projection of one Gaussian; ``None`` when culled by the depth range."""
    t = cam.world_to_camera(np.asarray(g.mean, dtype=np.float64))
    if not (cam.near < t[2] < cam.far):
        return None
    R = quat_to_rotmat(g.rotation)
    M = R * g.scale[None, :]
    sigma = M @ M.T
    J = np.array([[cam.fx / t[2], 0.0, -cam.fx * t[0] / t[2] ** 2],
                  [0.0, cam.fy / t[2], -cam.fy * t[1] / t[2] ** 2]])
    A = J @ cam.R
    cov = A @ sigma @ A.T + blur * np.eye(2)
    mean = np.array([cam.fx * t[0] / t[2] + cam.cx, cam.fy * t[1] / t[2] + cam.cy])
    return Splat2D(mean, 0.5 * (cov + cov.T), float(t[2]))


def _rotmats(q: Tensor) -> Tensor:
    qn = q / ops.norm(q, axis=1, keepdims=True)
    w, x, y, z = (qn[:, k] for k in range(4))
    entries = [
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ]
    return ops.stack(entries, axis=1).reshape(-1, 3, 3)


def _visible_order(scene: GaussianScene, cam: Camera, blur: float):
    """Indices of in-range, non-degenerate primitives sorted by (depth, index)."""
    t = cam.world_to_camera(scene.means.data)
    z = t[:, 2]
    in_range = (z > cam.near) & (z < cam.far)
    idx = np.nonzero(in_range)[0]
    n_degenerate = 0
    if idx.size:
        # cheap numpy pre-pass so degenerate splats never enter the tape
        R = quat_to_rotmat(scene.rotations.data[idx])
        s = np.exp(scene.log_scales.data[idx])
        M = R * s[:, None, :]
        sigma = M @ np.swapaxes(M, 1, 2)
        ti = t[idx]
        zi = ti[:, 2]
        J = np.zeros((idx.size, 2, 3))
        J[:, 0, 0] = cam.fx / zi
        J[:, 0, 2] = -cam.fx * ti[:, 0] / zi ** 2
        J[:, 1, 1] = cam.fy / zi
        J[:, 1, 2] = -cam.fy * ti[:, 1] / zi ** 2
        A = J @ cam.R
        cov = A @ sigma @ np.swapaxes(A, 1, 2) + blur * np.eye(2)
        det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] * cov[:, 1, 0]
        ok = np.isfinite(det) & (det > DET_MIN)
        n_degenerate = int((~ok).sum())
        idx = idx[ok]
    order = idx[np.lexsort((idx, z[idx]))]
    return order, int((~in_range).sum()), n_degenerate


def project_scene(scene: GaussianScene, cam: Camera, order: np.ndarray, blur: float = BLUR):
    """Differentiable projection of ``scene[order]``.

    Returns ``(mean2d, conic, opacity, feats, ray_quad)``. ``feats`` stacks
    color, the camera-facing shortest-axis normal (camera frame) and the
    shortest scale, one row per splat; ``ray_quad`` packs the camera-frame
    precision matrix ``Q`` and ``Q @ mean`` used for per-pixel ray depth.
    """
    means = scene.means[order]
    log_scales = scene.log_scales[order]
    Rg = _rotmats(scene.rotations[order])
    scales = ops.exp(log_scales)
    M = Rg * scales.reshape(-1, 1, 3)
    sigma = M @ ops.transpose(M, (0, 2, 1))

    t = means @ cam.R.T + cam.T
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    inv_z = 1.0 / tz
    zero = np.zeros(len(order))
    J = ops.stack([cam.fx * inv_z, zero, -cam.fx * tx * inv_z * inv_z,
                   zero, cam.fy * inv_z, -cam.fy * ty * inv_z * inv_z], axis=1).reshape(-1, 2, 3)
    A = J @ cam.R
    cov = A @ sigma @ ops.transpose(A, (0, 2, 1))
    a = cov[:, 0, 0] + blur
    b = cov[:, 0, 1]
    c = cov[:, 1, 1] + blur
    det = a * c - b * b
    conic = ops.stack([c / det, -b / det, a / det], axis=1)
    mean2d = ops.stack([cam.fx * tx * inv_z + cam.cx, cam.fy * ty * inv_z + cam.cy], axis=1)
    opacity = ops.sigmoid(scene.opacity_logits[order])

    axis = np.argmin(log_scales.data, axis=1)
    onehot = np.zeros((len(order), 3))
    onehot[np.arange(len(order)), axis] = 1.0
    n_world = ops.sum(Rg * onehot.reshape(-1, 1, 3), axis=2)
    n_cam = n_world @ cam.R.T
    facing = np.where(np.sum(n_cam.data * t.data, axis=1) > 0, -1.0, 1.0)
    n_cam = n_cam * facing[:, None]
    s_min = ops.sum(scales * onehot, axis=1)

    Rc = cam.R @ Rg
    Q = (Rc * ops.exp(-2.0 * log_scales).reshape(-1, 1, 3)) @ ops.transpose(Rc, (0, 2, 1))
    qm = (Q @ t.reshape(-1, 3, 1)).reshape(-1, 3)
    ray_quad = ops.concat([qm, Q[:, 0, 0:3], Q[:, 1, 1:3], Q[:, 2, 2:3]], axis=1)

    feats = ops.concat([scene.colors[order], n_cam, s_min.reshape(-1, 1)], axis=1)
    return mean2d, conic, opacity, feats, ray_quad


def finish_maps(comp: Tensor, opts: RenderOptions, diagnostics: dict) -> RenderOutput:
    """Turn raw composites ``(H, W, 9)`` (rgb, normal, s_min, depth, alpha) into render maps."""
    alpha = comp[..., 8]
    denom = ops.maximum(alpha, opts.eps)
    depth = comp[..., 7] / denom
    s_min = comp[..., 6] / denom
    valid = alpha.data >= opts.valid_threshold
    n_raw = comp[..., 3:6]
    n_len = ops.norm(n_raw, axis=-1, keepdims=True, eps=1e-24)
    safe = valid[..., None] & (n_len.data > 1e-12)
    normal = ops.where(safe, n_raw / ops.where(safe, n_len, 1.0), 0.0)
    return RenderOutput(rgb=comp[..., 0:3], depth=depth, alpha=alpha, normal=normal,
                        s_min=s_min, valid=valid, diagnostics=diagnostics)


def render(scene: GaussianScene, cam: Camera, opts: RenderOptions | None = None) -> RenderOutput:
    """Render ``scene`` through ``cam`` with differentiable alpha compositing.

    Background is black; ``alpha`` tells background apart from dark content.
    """
    opts = opts or RenderOptions()
    if len(scene) == 0:
        raise ValueError("cannot render an empty scene")
    order, n_culled, n_degenerate = _visible_order(scene, cam, opts.blur)
    diagnostics = {"culled": n_culled, "degenerate": n_degenerate, "visible": int(order.size)}
    if order.size == 0:
        comp = Tensor(np.zeros((cam.height, cam.width, 9)))
    else:
        mean2d, conic, opacity, feats, ray_quad = project_scene(scene, cam, order, opts.blur)
        comp = rasterize(mean2d, conic, opacity, feats, ray_quad, (cam.fx, cam.fy, cam.cx, cam.cy),
                         cam.width, cam.height,
                         alpha_min=opts.alpha_min, t_min=opts.t_min, tile=opts.tile)
    return finish_maps(comp, opts, diagnostics)
