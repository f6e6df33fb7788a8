"""Analytic ray casting against a city layout (ground rectangle + boxes).

Used only to check generated data and region diagnostics against exact
geometry; the training data itself comes from the splat renderer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..splat.camera import Camera, pixel_grid
from .city import FACADE, GROUND, ROOF, CityLayout

MISS = -1


@dataclass
class RayHits:
    t: np.ndarray        # ray parameter of the first hit (inf on miss)
    normal: np.ndarray   # outward unit normal at the hit
    label: np.ndarray    # GROUND / ROOF / FACADE or MISS
    building: np.ndarray  # box index, -1 for ground or miss

    @property
    def hit(self) -> np.ndarray:
        return np.isfinite(self.t)


def cast_rays(layout: CityLayout, origins: np.ndarray, dirs: np.ndarray, t_min: float = 1e-9) -> RayHits:
    """First intersection of ``origins + t * dirs`` (``t > t_min``)."""
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    o = np.broadcast_to(o, d.shape)
    n = len(d)
    best = np.full(n, np.inf)
    normal = np.zeros((n, 3))
    label = np.full(n, MISS)
    owner = np.full(n, -1)

    gx0, gy0, gx1, gy1 = layout.ground
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = -o[:, 2] / d[:, 2]
    p = o + tg[:, None] * d
    ok = (tg > t_min) & (p[:, 0] >= gx0) & (p[:, 0] <= gx1) & (p[:, 1] >= gy0) & (p[:, 1] <= gy1)
    ok &= np.isfinite(tg)
    best[ok] = tg[ok]
    normal[ok] = [0.0, 0.0, 1.0]
    label[ok] = GROUND

    for bi, b in enumerate(layout.boxes):
        lo = np.array([b.x0, b.y0, 0.0])
        hi = np.array([b.x1, b.y1, b.height])
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t0 = (lo - o) * inv
            t1 = (hi - o) * inv
        tnear = np.minimum(t0, t1)
        tfar = np.maximum(t0, t1)
        # a zero direction component: inside the slab -> unbounded, outside -> miss
        par = d == 0
        inside = (o >= lo) & (o <= hi)
        tnear = np.where(par, np.where(inside, -np.inf, np.inf), tnear)
        tfar = np.where(par, np.where(inside, np.inf, -np.inf), tfar)
        enter_axis = np.argmax(tnear, axis=1)
        t_enter = tnear[np.arange(n), enter_axis]
        t_exit = tfar.min(axis=1)
        hit = (t_enter <= t_exit) & (t_enter > t_min) & (t_enter < best)
        if not hit.any():
            continue
        best[hit] = t_enter[hit]
        nrm = np.zeros((hit.sum(), 3))
        ax = enter_axis[hit]
        nrm[np.arange(len(ax)), ax] = -np.sign(d[hit, ax])
        normal[hit] = nrm
        label[hit] = np.where(ax == 2, ROOF, FACADE)
        owner[hit] = bi
    return RayHits(best, normal, label, owner)


def camera_rays(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Camera center and per-pixel ray directions scaled so ``t`` is camera z."""
    xs, ys = pixel_grid(cam)
    d = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(xs)], axis=-1) @ cam.R
    return cam.center, d


def cast_camera(layout: CityLayout, cam: Camera) -> RayHits:
    """Cast every pixel ray of ``cam``; ``t`` is returned as camera z-depth, shaped ``(H, W)``."""
    c, d = camera_rays(cam)
    hits = cast_rays(layout, c[None, :], d.reshape(-1, 3))
    H, W = cam.height, cam.width
    return RayHits(hits.t.reshape(H, W), hits.normal.reshape(H, W, 3), hits.label.reshape(H, W),
                   hits.building.reshape(H, W))


def visible_from(layout: CityLayout, points: np.ndarray, normals: np.ndarray, cam: Camera,
                 tol: float = 1e-6) -> np.ndarray:
    """Whether each surface point is seen by ``cam`` (in frame, facing, unoccluded)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pc = cam.world_to_camera(pts)
    z = pc[:, 2]
    zs = np.where(z > 1e-9, z, 1.0)
    u = cam.fx * pc[:, 0] / zs + cam.cx
    v = cam.fy * pc[:, 1] / zs + cam.cy
    in_frame = (z > cam.near) & (z < cam.far) & (u >= -0.5) & (u <= cam.width - 0.5)
    in_frame &= (v >= -0.5) & (v <= cam.height - 0.5)
    facing = np.sum(normals * (cam.center - pts), axis=1) > 0
    ok = in_frame & facing
    if ok.any():
        dirs = pts[ok] - cam.center
        hits = cast_rays(layout, cam.center[None, :], dirs)
        ok[np.nonzero(ok)[0]] = hits.t >= 1.0 - tol
    return ok


def sample_surface_points(layout: CityLayout, spacing: float = 0.05, inset: float = 0.02):
    """Regular samples on roofs and facades: ``(points, normals, labels, building)``."""
    pts, nrms, labs, own = [], [], [], []

    def grid(lo, hi):
        n = max(1, int((hi - lo - 2 * inset) / spacing) + 1)
        return np.linspace(lo + inset, hi - inset, n)

    for bi, b in enumerate(layout.boxes):
        X, Y = np.meshgrid(grid(b.x0, b.x1), grid(b.y0, b.y1))
        P = np.stack([X.ravel(), Y.ravel(), np.full(X.size, b.height)], 1)
        pts.append(P)
        nrms.append(np.tile([0.0, 0.0, 1.0], (len(P), 1)))
        labs.append(np.full(len(P), ROOF))
        own.append(np.full(len(P), bi))
        zs = grid(0.0, b.height)
        for axis, fixed, sign, lo, hi in ((0, b.x0, -1, b.y0, b.y1), (0, b.x1, 1, b.y0, b.y1),
                                          (1, b.y0, -1, b.x0, b.x1), (1, b.y1, 1, b.x0, b.x1)):
            T, Z = np.meshgrid(grid(lo, hi), zs)
            P = np.zeros((T.size, 3))
            P[:, axis] = fixed
            P[:, 1 - axis] = T.ravel()
            P[:, 2] = Z.ravel()
            N = np.zeros_like(P)
            N[:, axis] = sign
            # nudge off the face so the point's own box does not occlude it
            pts.append(P + 1e-7 * N)
            nrms.append(N)
            labs.append(np.full(len(P), FACADE))
            own.append(np.full(len(P), bi))
    return np.concatenate(pts), np.concatenate(nrms), np.concatenate(labs), np.concatenate(own)
