"""Brute-force reference renderer used as a test oracle.

Everything here is plain numpy written independently of the fast path: its own
quaternion formula, dense evaluation of every splat at every pixel and a full
stable sort per pixel. By default nothing is skipped or terminated early
(apart from weights below 1e-16, which cannot change a float64 result);
``match_thresholds=True`` applies the same skip rules as the fast renderer so
the two can be compared to rounding precision.
"""
from __future__ import annotations

import numpy as np

from ..numcore import Tensor
from .camera import Camera
from .gaussians import GaussianScene
from .render import DET_MIN, RenderOptions, RenderOutput

NEGLIGIBLE = 1e-16


def _rot(q: np.ndarray) -> np.ndarray:
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, v = q[:, 0], q[:, 1:]
    cross = np.zeros((len(q), 3, 3))
    cross[:, 0, 1], cross[:, 0, 2] = -v[:, 2], v[:, 1]
    cross[:, 1, 0], cross[:, 1, 2] = v[:, 2], -v[:, 0]
    cross[:, 2, 0], cross[:, 2, 1] = -v[:, 1], v[:, 0]
    eye = np.eye(3)[None] * (w ** 2 - np.sum(v * v, axis=1))[:, None, None]
    return eye + 2.0 * v[:, :, None] * v[:, None, :] + 2.0 * w[:, None, None] * cross


def render_reference(scene: GaussianScene, cam: Camera, opts: RenderOptions | None = None,
                     match_thresholds: bool = False, block: int = 16) -> RenderOutput:
    opts = opts or RenderOptions()
    alpha_min = opts.alpha_min if match_thresholds else 0.0
    t_min = opts.t_min if match_thresholds else 0.0
    blur = opts.blur

    means = scene.means.data
    pc = (cam.R @ means.T).T + cam.T
    keep = (pc[:, 2] > cam.near) & (pc[:, 2] < cam.far)
    n_culled = int((~keep).sum())
    idx = np.nonzero(keep)[0]
    pc = pc[idx]
    Rg = _rot(scene.rotations.data[idx])
    s = np.exp(scene.log_scales.data[idx])
    cov3 = np.einsum("nij,nj,nkj->nik", Rg, s ** 2, Rg)
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    J = np.zeros((len(idx), 2, 3))
    J[:, 0, 0], J[:, 0, 2] = cam.fx / z, -cam.fx * x / z ** 2
    J[:, 1, 1], J[:, 1, 2] = cam.fy / z, -cam.fy * y / z ** 2
    JW = np.einsum("nij,jk->nik", J, cam.R)
    cov2 = np.einsum("nij,njk,nlk->nil", JW, cov3, JW) + blur * np.eye(2)
    det = cov2[:, 0, 0] * cov2[:, 1, 1] - cov2[:, 0, 1] ** 2
    good = np.isfinite(det) & (det > DET_MIN)
    n_degenerate = int((~good).sum())
    idx, pc, Rg, s, cov2, det = idx[good], pc[good], Rg[good], s[good], cov2[good], det[good]
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    inv = np.stack([cov2[:, 1, 1], -cov2[:, 0, 1], cov2[:, 0, 0]], axis=1) / det[:, None]
    u = cam.fx * x / z + cam.cx
    v = cam.fy * y / z + cam.cy
    opac = 1.0 / (1.0 + np.exp(-scene.opacity_logits.data[idx]))
    # extent beyond which a splat's weight is < NEGLIGIBLE: the ellipse
    # d^T inv d = 2 ln(opac / NEGLIGIBLE) has half-widths sqrt(r2 * cov_xx) etc.
    r2 = 2.0 * np.log(np.maximum(opac / NEGLIGIBLE, 1.0)) * (1.0 + 1e-9)
    reach_x = np.sqrt(r2 * cov2[:, 0, 0]) + 1e-9
    reach_y = np.sqrt(r2 * cov2[:, 1, 1]) + 1e-9

    short = np.argmin(s, axis=1)
    nrm = Rg[np.arange(len(idx)), :, short] @ cam.R.T
    nrm *= np.where(np.sum(nrm * pc, axis=1) > 0, -1.0, 1.0)[:, None]
    feats = np.concatenate([scene.colors.data[idx], nrm, s[np.arange(len(idx)), short][:, None]], axis=1)
    # world-frame precision matrices for the max-density point along each ray
    prec = np.einsum("nij,nj,nkj->nik", Rg, 1.0 / s ** 2, Rg)
    origin = cam.center
    prec_off = np.einsum("nij,nj->ni", prec, means[idx] - origin)

    H, W = cam.height, cam.width
    py, px = np.mgrid[0:H, 0:W]
    px = px.reshape(-1).astype(np.float64)
    py = py.reshape(-1).astype(np.float64)
    comp = np.zeros((H * W, feats.shape[1] + 2))
    median = np.zeros(H * W)
    flat = np.arange(H * W).reshape(H, W)
    blocks = [flat[y:y + block, x:x + block].reshape(-1) for y in range(0, H, block) for x in range(0, W, block)]
    for sl in blocks:
        # splats weighing under 1e-16 on every pixel of the chunk are below
        # float64 resolution of the composite; dropping them only saves time
        near = ((u + reach_x >= px[sl].min()) & (u - reach_x <= px[sl].max())
                & (v + reach_y >= py[sl].min()) & (v - reach_y <= py[sl].max()))
        cand = np.nonzero(near)[0]
        dx = px[sl, None] - u[None, cand]
        dy = py[sl, None] - v[None, cand]
        ic = inv[cand]
        a = opac[None, cand] * np.exp(-0.5 * (ic[:, 0] * dx * dx + 2 * ic[:, 1] * dx * dy + ic[:, 2] * dy * dy))
        keep = (a >= NEGLIGIBLE).any(axis=0)
        live = cand[keep]
        a = a[:, keep]
        rays = np.stack([(px[sl] - cam.cx) / cam.fx, (py[sl] - cam.cy) / cam.fy, np.ones_like(px[sl])], 1) @ cam.R
        # ray(t) = origin + t * rays sits at camera depth t, so t* is already a z-depth
        num = rays @ (prec_off[live]).T
        den = (rays[:, :, None] * rays[:, None, :]).reshape(-1, 9) @ prec[live].reshape(-1, 9).T
        zray = num / den
        # exhaustive per-pixel stable sort by depth (ties keep index order)
        order = np.argsort(np.broadcast_to(z[live], a.shape), axis=1, kind="stable")
        a = np.take_along_axis(a, order, axis=1)
        a = np.where(a < alpha_min, 0.0, a)
        T = np.cumprod(np.concatenate([np.ones((a.shape[0], 1)), 1.0 - a[:, :-1]], axis=1), axis=1)
        if t_min > 0:
            # a pixel keeps the contribution that pushes T below t_min, then stops
            T_after = T * (1.0 - a)
            stopped = np.cumsum(T_after < t_min, axis=1) - (T_after < t_min)
            a = np.where(stopped > 0, 0.0, a)
        w = a * T
        f_sorted = feats[live][order]
        comp[sl, :-2] = np.einsum("pk,pkc->pc", w, f_sorted)
        comp[sl, -2] = np.sum(w * np.take_along_axis(zray, order, axis=1), axis=1)
        comp[sl, -1] = 1.0 - np.prod(1.0 - a, axis=1)
        # median depth: ray depth of the splat that drives transmittance below 1/2
        if a.shape[1] == 0:
            continue
        crossed = T * (1.0 - a) < 0.5
        first = np.argmax(crossed, axis=1)
        hit = crossed.any(axis=1)
        zs = np.take_along_axis(np.take_along_axis(zray, order, axis=1), first[:, None], axis=1)[:, 0]
        median[sl] = np.where(hit, zs, 0.0)
    comp = comp.reshape(H, W, -1)

    alpha = comp[..., 8]
    denom = np.maximum(alpha, opts.eps)
    valid = alpha >= opts.valid_threshold
    n_raw = comp[..., 3:6]
    n_len = np.linalg.norm(n_raw, axis=-1, keepdims=True)
    safe = valid[..., None] & (n_len > 1e-12)
    normal = np.where(safe, n_raw / np.where(safe, n_len, 1.0), 0.0)
    diagnostics = {"culled": n_culled, "degenerate": n_degenerate, "visible": int(len(idx))}
    return RenderOutput(rgb=Tensor(comp[..., 0:3]), depth=Tensor(comp[..., 7] / denom), alpha=Tensor(alpha),
                        normal=Tensor(normal), s_min=Tensor(comp[..., 6] / denom), valid=valid,
                        diagnostics=diagnostics, median_depth=median.reshape(H, W))
