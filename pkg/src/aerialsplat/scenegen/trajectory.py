"""Aerial camera sampling: a jittered orbit of downward-looking views."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..splat.camera import Camera


@dataclass
class TrajectoryConfig:
    """Orbit of ``n_views`` cameras around the city center.

    Pitch is the optical-axis elevation in degrees (negative looks down,
    -90 is nadir). Each camera heads toward the vertical axis through the
    center, so oblique views look across the city.
    """

    n_views: int = 16
    altitude_range: tuple[float, float] = (2.4, 3.2)
    pitch_range: tuple[float, float] = (-90.0, -50.0)
    orbit_radius: float = 1.2
    jitter_std: float = 0.1
    width: int = 64
    height: int = 64
    fov_deg: float = 60.0
    near: float = 0.05
    far: float = 20.0
    seed: int = 0

    def __post_init__(self):
        self.altitude_range = tuple(float(a) for a in self.altitude_range)
        self.pitch_range = tuple(float(p) for p in self.pitch_range)
        lo, hi = self.pitch_range
        if not -90.0 <= lo <= hi <= -20.0:
            raise ValueError("pitch_range must lie within [-90, -20] degrees")
        if not 0 < self.altitude_range[0] <= self.altitude_range[1]:
            raise ValueError("altitude_range must be positive and ordered")
        if self.n_views < 2:
            raise ValueError("need at least 2 views")
        if self.orbit_radius < 0 or self.jitter_std < 0:
            raise ValueError("orbit_radius and jitter_std must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["altitude_range"] = list(self.altitude_range)
        d["pitch_range"] = list(self.pitch_range)
        return d


def aerial_camera(eye, heading: float, pitch_deg: float, cfg: TrajectoryConfig) -> Camera:
    """Camera at ``eye`` facing azimuth ``heading`` (radians) at the given pitch."""
    h = np.array([np.cos(heading), np.sin(heading), 0.0])
    if pitch_deg <= -90.0:
        fwd = np.array([0.0, 0.0, -1.0])
    else:
        p = np.radians(pitch_deg)
        fwd = np.cos(p) * h + np.array([0.0, 0.0, np.sin(p)])
        fwd /= np.linalg.norm(fwd)
    right = np.cross(h, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    right -= fwd * np.dot(fwd, right)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    f = 0.5 * cfg.width / np.tan(np.radians(cfg.fov_deg) / 2.0)
    return Camera(fx=f, fy=f, cx=cfg.width / 2.0, cy=cfg.height / 2.0, R=R, T=-R @ np.asarray(eye, dtype=np.float64),
                  width=cfg.width, height=cfg.height, near=cfg.near, far=cfg.far)


def sample_aerial_cameras(config: TrajectoryConfig) -> list[Camera]:
    rng = np.random.default_rng(config.seed)
    cams = []
    for i in range(config.n_views):
        az = 2.0 * np.pi * i / config.n_views + rng.normal(0, config.jitter_std)
        r = max(0.0, config.orbit_radius + rng.normal(0, config.jitter_std))
        alt = rng.uniform(*config.altitude_range)
        pitch = rng.uniform(*config.pitch_range)
        eye = np.array([r * np.cos(az), r * np.sin(az), alt])
        cams.append(aerial_camera(eye, az + np.pi, pitch, config))
    return cams
