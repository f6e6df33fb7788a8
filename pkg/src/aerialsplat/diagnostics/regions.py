"""Target-pixel classification into observation-supported and weakly constrained regions."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..splat.camera import Camera, backproject

INVALID, OBSERVED, WEAK = 0, 1, 2
REGION_NAMES = {INVALID: "invalid", OBSERVED: "observed", WEAK: "weak"}


@dataclass
class DiagThresholds:
    tau_occ: float = 0.03    # relative depth tolerance of the occlusion test
    tau_par: float = 0.05    # minimum parallax angle, radians
    margin: int = 2          # pixels inside the image border

    def __post_init__(self):
        if self.tau_occ <= 0 or self.tau_par <= 0 or self.margin < 0:
            raise ValueError("thresholds must be positive (margin non-negative)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RegionMask:
    labels: np.ndarray      # INVALID / OBSERVED / WEAK per pixel
    count: np.ndarray       # number of context views seeing the pixel's point
    parallax: np.ndarray    # max pairwise angle between visible context rays (radians)

    def fraction(self, label: int, where=None) -> float | None:
        valid = self.labels != INVALID
        if where is not None:
            valid &= where
        n = valid.sum()
        return float((self.labels[valid] == label).sum() / n) if n else None


def _in_frame(u: np.ndarray, v: np.ndarray, cam: Camera, margin: int) -> np.ndarray:
    return (u >= margin) & (u <= cam.width - 1 - margin) & (v >= margin) & (v <= cam.height - 1 - margin)


def max_pairwise_angle(points: np.ndarray, centers: np.ndarray, visible: np.ndarray) -> np.ndarray:
    """Largest angle between rays from any two visible cameras to each point.

    ``points`` (N, 3), ``centers`` (C, 3), ``visible`` (C, N).
    """
    best = np.zeros(len(points))
    rays = centers[:, None, :] - points[None, :, :]
    rays /= np.maximum(np.linalg.norm(rays, axis=-1, keepdims=True), 1e-300)
    C = len(centers)
    for i in range(C):
        for j in range(i + 1, C):
            both = visible[i] & visible[j]
            if not both.any():
                continue
            cos = np.clip(np.sum(rays[i] * rays[j], axis=-1), -1.0, 1.0)
            best = np.where(both, np.maximum(best, np.arccos(cos)), best)
    return best


def depth_discontinuity(depth: np.ndarray, valid: np.ndarray, tau: float) -> np.ndarray:
    """Pixels whose largest relative jump to a 4-neighbor exceeds ``tau`` (invalid neighbors count as jumps)."""
    H, W = depth.shape
    out = np.zeros((H, W), dtype=bool)
    d = np.where(valid, depth, np.nan)
    pad = np.pad(d, 1, constant_values=np.nan)
    inside = np.pad(np.ones((H, W), dtype=bool), 1, constant_values=False)
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        nb = pad[1 + dy:1 + dy + H, 1 + dx:1 + dx + W]
        in_img = inside[1 + dy:1 + dy + H, 1 + dx:1 + dx + W]
        with np.errstate(invalid="ignore"):
            jump = np.abs(nb - d) / d > tau
        out |= in_img & (jump | ~np.isfinite(nb))
    return out & valid


def classify_regions(target_depth: np.ndarray, target_cam: Camera, context_depths: list[np.ndarray],
                     context_cams: list[Camera], thresholds: DiagThresholds | None = None) -> RegionMask:
    """Label every target pixel by how well the context views constrain its 3D point.

    A context view sees the point when it reprojects inside the border
    margin, in front of the camera, and agrees with that view's depth at the
    landing pixel within ``tau_occ`` (relative). Points seen by at least two
    views with parallax of at least ``tau_par`` are observed; pixels on a
    depth discontinuity are always weak.
    """
    th = thresholds or DiagThresholds()
    depth = np.asarray(target_depth, dtype=np.float64)
    valid = np.isfinite(depth) & (depth > 0)
    H, W = depth.shape
    count = np.zeros((H, W), dtype=int)
    parallax = np.zeros((H, W))
    labels = np.where(valid, WEAK, INVALID)
    if not context_cams or not valid.any():
        return RegionMask(labels, count, parallax)

    pts, _ = backproject(np.where(valid, depth, 1.0), target_cam)
    X = pts[valid]
    vis = np.zeros((len(context_cams), len(X)), dtype=bool)
    for c, (cd, cam) in enumerate(zip(context_depths, context_cams)):
        pc = cam.world_to_camera(X)
        z = pc[:, 2]
        front = z > 1e-9
        zs = np.where(front, z, 1.0)
        u = cam.fx * pc[:, 0] / zs + cam.cx
        v = cam.fy * pc[:, 1] / zs + cam.cy
        ok = front & _in_frame(u, v, cam, th.margin)
        iu = np.clip(np.rint(u).astype(int), 0, cam.width - 1)
        iv = np.clip(np.rint(v).astype(int), 0, cam.height - 1)
        dc = np.asarray(cd, dtype=np.float64)[iv, iu]
        good = ok & np.isfinite(dc) & (dc > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            vis[c] = good & (np.abs(z - dc) / np.where(good, dc, 1.0) <= th.tau_occ)
    centers = np.stack([c.center for c in context_cams])
    count[valid] = vis.sum(axis=0)
    parallax[valid] = max_pairwise_angle(X, centers, vis)
    observed = valid & (count >= 2) & (parallax >= th.tau_par)
    observed &= ~depth_discontinuity(depth, valid, th.tau_occ)
    labels = np.where(observed, OBSERVED, labels)
    return RegionMask(labels, count, parallax)


def classify_regions_raycast(layout, target_cam: Camera, context_cams: list[Camera],
                             thresholds: DiagThresholds | None = None,
                             target_depth: np.ndarray | None = None) -> RegionMask:
    """Same rules evaluated on exact box geometry: visibility by casting rays to each context camera.

    By default the target points come from casting the target rays too. With
    ``target_depth`` the points are back-projected from that map instead, so
    only the context-visibility reasoning differs from :func:`classify_regions`.
    """
    from ..scenegen.raycast import cast_camera, cast_rays

    th = thresholds or DiagThresholds()
    if target_depth is None:
        hits = cast_camera(layout, target_cam)
        valid = hits.hit
        depth = np.where(valid, hits.t, 0.0)
    else:
        depth = np.asarray(target_depth, dtype=np.float64)
        valid = np.isfinite(depth) & (depth > 0)
        depth = np.where(valid, depth, 0.0)
    H, W = depth.shape
    count = np.zeros((H, W), dtype=int)
    parallax = np.zeros((H, W))
    labels = np.where(valid, WEAK, INVALID)
    if not context_cams or not valid.any():
        return RegionMask(labels, count, parallax)
    pts, _ = backproject(depth, target_cam)
    X = pts[valid]
    vis = np.zeros((len(context_cams), len(X)), dtype=bool)
    for c, cam in enumerate(context_cams):
        pc = cam.world_to_camera(X)
        z = pc[:, 2]
        front = z > 1e-9
        zs = np.where(front, z, 1.0)
        u = cam.fx * pc[:, 0] / zs + cam.cx
        v = cam.fy * pc[:, 1] / zs + cam.cy
        ok = front & _in_frame(u, v, cam, th.margin)
        if ok.any():
            # unoccluded iff the first hit from the camera lies within tau_occ of the point
            idx = np.nonzero(ok)[0]
            r = cast_rays(layout, cam.center[None, :], X[idx] - cam.center)
            ok[idx] = np.abs(r.t - 1.0) <= th.tau_occ
        vis[c] = ok
    centers = np.stack([c.center for c in context_cams])
    count[valid] = vis.sum(axis=0)
    parallax[valid] = max_pairwise_angle(X, centers, vis)
    observed = valid & (count >= 2) & (parallax >= th.tau_par)
    observed &= ~depth_discontinuity(depth, valid, th.tau_occ)
    return RegionMask(np.where(observed, OBSERVED, labels), count, parallax)
