"""Individual loss terms."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..numcore import Tensor, as_tensor, ops, stop_gradient
from ..splat.camera import Camera, backproject
from ..splat.gaussians import GaussianScene
from ..splat.render import RenderOptions, RenderOutput, render

MIN_ALIGN_PIXELS = 16


class EmptyMaskWarning(UserWarning):
    """A loss had no valid pixels and returned zero."""


def _empty(name: str) -> Tensor:
    warnings.warn(f"{name}: empty mask, loss set to 0", EmptyMaskWarning, stacklevel=3)
    return Tensor(0.0)


def _mask(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    return np.asarray(mask, dtype=bool)


# -- photometric ----------------------------------------------------------------

def loss_rgb(pred: RenderOutput | Tensor, gt: np.ndarray, mask=None) -> Tensor:
    """Mean absolute error over masked pixels and all channels."""
    rgb = pred.rgb if isinstance(pred, RenderOutput) else as_tensor(pred)
    gt = np.asarray(gt, dtype=np.float64)
    if rgb.shape != gt.shape:
        raise ValueError(f"shape mismatch {rgb.shape} vs {gt.shape}")
    m = _mask(mask, gt.shape[:2])
    if not m.any():
        return _empty("loss_rgb")
    return ops.masked_mean(ops.abs(rgb - gt), np.broadcast_to(m[..., None], gt.shape))


# -- depth ------------------------------------------------------------------------

@dataclass
class Alignment:
    a: float
    b: float
    pred_log_inv: Tensor      # log(a / D + b)
    ref_log_inv: np.ndarray   # log(1 / D*)
    mask: np.ndarray


def solve_affine(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least squares ``argmin sum (a x + b - y)^2`` through the 2x2 normal equations, ``a >= 1e-6``."""
    n = float(len(x))
    sxx, sx, sxy, sy = float(x @ x), float(x.sum()), float(x @ y), float(y.sum())
    det = sxx * n - sx * sx
    if abs(det) < 1e-300:
        a = 1.0
    else:
        a = (sxy * n - sx * sy) / det
    if a < 1e-6:
        # constrained optimum: with a pinned the best shift is the mean residual
        a = 1e-6
    b = (sy - a * sx) / n
    return a, b


def align_affine_invdepth(pred_depth, ref_depth: np.ndarray, mask=None) -> Alignment | None:
    """Scale/shift alignment of predicted inverse depth to reference inverse depth.

    The coefficients are constants (no gradient flows through the fit).
    Returns ``None`` when fewer than 16 pixels are usable.
    """
    pred = as_tensor(pred_depth)
    ref = np.asarray(ref_depth, dtype=np.float64)
    m = _mask(mask, ref.shape) & (ref > 0) & (pred.data > 0) & np.isfinite(pred.data)
    if m.sum() < MIN_ALIGN_PIXELS:
        return None
    # routed through stop_gradient so finite-difference checks hold the fit fixed too
    a, b = stop_gradient(Tensor(np.array(solve_affine(1.0 / pred.data[m], 1.0 / ref[m])))).data
    a, b = float(a), float(b)
    safe = np.where(m, pred.data, 1.0)
    denom = ops.where(m, pred, safe)
    arg = ops.maximum(a / denom + b, 1e-12)
    ref_log = np.where(m, np.log(1.0 / np.where(m, ref, 1.0)), 0.0)
    return Alignment(a, b, ops.log(arg), ref_log, m)


def _forward_diffs(x, m: np.ndarray):
    dx = x[:, 1:] - x[:, :-1]
    dy = x[1:, :] - x[:-1, :]
    return dx, dy, m[:, 1:] & m[:, :-1], m[1:, :] & m[:-1, :]


def loss_depth_z(pred_depth, ref_depth: np.ndarray, mask=None, alignment: Alignment | None = None) -> Tensor:
    """Aligned log-inverse depth L1 plus L1 of its forward-difference gradients."""
    al = alignment or align_affine_invdepth(pred_depth, ref_depth, mask)
    if al is None:
        warnings.warn("loss_depth_z: fewer than 16 valid pixels, skipped", EmptyMaskWarning, stacklevel=2)
        return Tensor(0.0)
    r = al.pred_log_inv - al.ref_log_inv
    value = ops.masked_mean(ops.abs(r), al.mask)
    px, py, mx, my = _forward_diffs(al.pred_log_inv, al.mask)
    rx, ry, _, _ = _forward_diffs(al.ref_log_inv, al.mask)
    count = mx.sum() + my.sum()
    if count:
        grad = (ops.sum(ops.abs(px - rx) * mx) + ops.sum(ops.abs(py - ry) * my)) / float(count)
        value = value + grad
    return value


def loss_ray_anchor(scene: GaussianScene, cameras: list[Camera], eps: float = 1e-18) -> Tensor:
    """Mean pixel distance between each mean's reprojection and its source pixel.

    Distances are divided by the source image width; primitives behind their
    source camera cost half the image diagonal in the same units.
    """
    if not scene.has_source_tags:
        raise ValueError("scene has no source tags")
    view = np.asarray(scene.source_view)
    if np.any(view < 0):
        raise ValueError("untagged primitives in scene")
    n = len(scene)
    R = np.stack([cameras[v].R for v in view])
    T = np.stack([cameras[v].T for v in view])
    intr = np.array([[c.fx, c.fy, c.cx, c.cy, c.width, c.height] for c in cameras])[view]
    pc = ops.sum(R * scene.means.reshape(n, 1, 3), axis=2) + T
    z = pc[:, 2]
    front = z.data > 1e-9
    zs = ops.where(front, z, 1.0)
    u = intr[:, 0] * pc[:, 0] / zs + intr[:, 2]
    v = intr[:, 1] * pc[:, 1] / zs + intr[:, 3]
    src = np.asarray(scene.source_pixel, dtype=np.float64)
    dist = ops.sqrt(ops.square(u - src[:, 0]) + ops.square(v - src[:, 1]) + eps) / intr[:, 4]
    behind = 0.5 * np.hypot(intr[:, 4], intr[:, 5]) / intr[:, 4]
    return ops.mean(ops.where(front, dist, behind))


# -- normals ----------------------------------------------------------------------

@dataclass
class SurfaceNormals:
    normal: np.ndarray     # (H, W, 3) world frame, zero where invalid
    valid: np.ndarray
    grad_norm: np.ndarray  # |dP/dx| and |dP/dy| combined, world units per pixel


def surface_normal_from_depth(depth: np.ndarray, cam: Camera, mask=None) -> SurfaceNormals:
    """Normals of the backprojected point map from central differences, facing the camera."""
    depth = np.asarray(depth, dtype=np.float64)
    H, W = depth.shape
    m = _mask(mask, depth.shape) & (depth > 0) & np.isfinite(depth)
    P, _ = backproject(np.where(m, depth, 1.0), cam)
    ok = np.zeros((H, W), dtype=bool)
    ok[1:-1, 1:-1] = (m[1:-1, 1:-1] & m[1:-1, 2:] & m[1:-1, :-2] & m[2:, 1:-1] & m[:-2, 1:-1])
    dx = np.zeros_like(P)
    dy = np.zeros_like(P)
    dx[:, 1:-1] = 0.5 * (P[:, 2:] - P[:, :-2])
    dy[1:-1, :] = 0.5 * (P[2:, :] - P[:-2, :])
    n = np.cross(dx, dy)
    length = np.linalg.norm(n, axis=-1)
    ok &= length >= 1e-12
    n = np.where(ok[..., None], n / np.where(ok, length, 1.0)[..., None], 0.0)
    toward = np.sum(n * (cam.center - P), axis=-1)
    n = np.where((toward < 0)[..., None], -n, n)
    gn = np.where(ok, np.sqrt(np.sum(dx * dx, -1) + np.sum(dy * dy, -1)), 0.0)
    return SurfaceNormals(n, ok, gn)


def structure_weight(surf: SurfaceNormals) -> np.ndarray:
    """``exp(-|grad P| / median |grad P|)`` over valid pixels (0 elsewhere)."""
    if not surf.valid.any():
        return np.zeros(surf.valid.shape)
    med = float(np.median(surf.grad_norm[surf.valid]))
    scale = med if med > 0 else 1.0
    return np.where(surf.valid, np.exp(-surf.grad_norm / scale), 0.0)


def loss_normal(pred: RenderOutput, cam: Camera, ref_depth: np.ndarray, mask=None, flat: float = 0.01,
                delta: float = 0.1) -> Tensor:
    """Structure-weighted Huber alignment of rendered normals to depth-derived normals.

    ``ref_depth`` defines the surface (the reference depth during training);
    its normals and the weight map are constants. A flattening term pulls the
    composited shortest scale toward zero.
    """
    surf = surface_normal_from_depth(ref_depth, cam, mask)
    omega = surf.valid & pred.valid
    if not omega.any():
        return _empty("loss_normal")
    w = structure_weight(surf)
    n_surf = surf.normal @ cam.R.T  # camera frame, like the rendered map
    cos = ops.sum(pred.normal * n_surf, axis=-1)
    per_pixel = ops.huber(1.0 - cos, delta) + flat * pred.s_min
    return ops.masked_mean(per_pixel * w, omega)


# -- stage II ---------------------------------------------------------------------

def _render_list(target, cameras, opts):
    if isinstance(target, GaussianScene):
        return [render(target, c, opts) for c in cameras]
    out = list(target)
    if len(out) != len(cameras):
        raise ValueError("need one render per camera")
    return out


def loss_d2s(student: GaussianScene, teacher, cameras: list[Camera], depth_weight: float = 1.0,
             opts: RenderOptions | None = None, parts: bool = False):
    """Sum over cameras of RGB L1 to the detached teacher render plus weighted depth L1.

    ``teacher`` is a scene or a list of its renders at ``cameras``; depth is
    compared only where the teacher render is valid. With ``parts=True``
    returns ``(rgb_sum, depth_sum)`` unweighted.
    """
    if not cameras:
        raise ValueError("loss_d2s needs at least one camera")
    teach = _render_list(teacher, cameras, opts)
    rgb_sum, depth_sum = Tensor(0.0), Tensor(0.0)
    for cam, t in zip(cameras, teach):
        s = render(student, cam, opts)
        rgb_sum = rgb_sum + ops.mean(ops.abs(s.rgb - stop_gradient(t.rgb)))
        if t.valid.any():
            depth_sum = depth_sum + ops.masked_mean(ops.abs(s.depth - stop_gradient(t.depth)), t.valid)
    if parts:
        return rgb_sum, depth_sum
    return rgb_sum + depth_weight * depth_sum


def loss_pres_renders(final: GaussianScene, reference, cameras: list[Camera],
                      opts: RenderOptions | None = None) -> Tensor:
    """Sum over cameras of RGB L1 between the final scene and the detached scaffold render."""
    ref = _render_list(reference, cameras, opts)
    total = Tensor(0.0)
    for cam, r in zip(cameras, ref):
        total = total + ops.mean(ops.abs(render(final, cam, opts).rgb - stop_gradient(r.rgb)))
    return total


def loss_pres(z_final, z_geo, decoder, images, cameras: list[Camera], opts: RenderOptions | None = None) -> Tensor:
    """Preservation: decode both latents with the shared decoder and compare renders.

    ``cameras`` are the sparse supervision cameras; the input views use the
    same cameras for decoding.
    """
    from ..numcore import no_grad
    final = decoder(z_final, images, cameras)
    with no_grad():
        scaffold = decoder(z_geo, images, cameras).detach()
    return loss_pres_renders(final, scaffold, cameras, opts)


def loss_reg(delta, gates, scene: GaussianScene, s_max: float | None = None, parts: bool = False):
    """``mean(dZ^2) + mean(g) + mean(relu(scale - s_max)^2)`` with ``s_max`` 10% of the scene extent."""
    d = delta.tokens if hasattr(delta, "tokens") else as_tensor(delta)
    residual = ops.mean(ops.square(d))
    gate = Tensor(0.0)
    if gates:
        flat = [g.reshape(-1) for g in gates]
        gate = ops.mean(ops.concat(flat, axis=0))
    if s_max is None:
        s_max = 0.1 * scene.extent()
    over = ops.relu(ops.exp(scene.log_scales) - s_max)
    gauss = ops.mean(ops.square(over))
    if parts:
        return residual, gate, gauss
    return residual + gate + gauss
