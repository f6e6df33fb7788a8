"""Pixel-aligned Gaussian decoder shared by the scaffold and final latents."""
from __future__ import annotations

import numpy as np

from ..numcore import NonFiniteError, Tensor, ops
from ..splat.camera import Camera
from ..splat.gaussians import GaussianScene
from .config import NetConfig
from .encoder import TokenField
from .layers import LayerNorm, Linear, Module

HEAD = 14  # depth 1, offset 2, log_scale 3, quaternion 4, opacity 1, color 3
OFFSET = slice(1, 3)


def patch_centers(cfg: NetConfig) -> np.ndarray:
    """Pixel coordinates ``(T, 2)`` of patch centers (pixel centers are integers)."""
    rows, cols = cfg.grid
    yy, xx = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    half = (cfg.patch - 1) / 2.0
    return np.stack([xx.ravel() * cfg.patch + half, yy.ravel() * cfg.patch + half], axis=1)


def patch_colors(images: np.ndarray, patch: int) -> np.ndarray:
    """Mean RGB of every patch: ``(V, T, 3)``."""
    V, H, W, _ = images.shape
    x = np.asarray(images, dtype=np.float64).reshape(V, H // patch, patch, W // patch, patch, 3)
    return x.mean(axis=(2, 4)).reshape(V, -1, 3)


class GaussianDecoder(Module):
    """Each token emits ``per_token`` Gaussians placed along rays of its own view.

    The token's patch center is the source pixel. The head predicts a depth
    (sigmoid into ``depth_range``), an in-patch pixel offset (tanh, at most
    half a patch), log-scales relative to the pixel footprint at that depth,
    a quaternion around identity, an opacity logit and colors (sigmoid, with
    a learned skip from the patch's mean color that starts switched off).
    """

    def __init__(self, cfg: NetConfig, rng: np.random.Generator, name: str = "decoder"):
        super().__init__(name)
        self.cfg = cfg
        k = cfg.per_token
        self.ln = self.child(LayerNorm(f"{name}.ln", cfg.dim))
        self.fc1 = self.child(Linear(f"{name}.fc1", cfg.dim, cfg.dim, rng))
        self.fc2 = self.child(Linear(f"{name}.fc2", cfg.dim, HEAD * k, rng, std=cfg.head_std))
        w = self.fc2.w.data.reshape(cfg.dim, k, HEAD)
        w[:, :, OFFSET] = rng.normal(0.0, cfg.offset_std, (cfg.dim, k, 2))
        self.fc2.w.assign(w.reshape(cfg.dim, HEAD * k))
        self.color_skip = self.param("color_skip", np.zeros(1))
        self.centers = patch_centers(cfg)

    def head(self, z: TokenField) -> Tensor:
        """Raw head outputs ``(V * T * k, 14)``."""
        V, T, D = z.shape
        h = self.fc2(ops.gelu(self.fc1(self.ln(z.tokens))))
        raw = h.reshape(V * T * self.cfg.per_token, HEAD)
        if not np.all(np.isfinite(raw.data)):
            raise NonFiniteError("decoder head produced non-finite values")
        return raw

    def __call__(self, z: TokenField, images: np.ndarray, cameras: list[Camera]) -> GaussianScene:
        cfg = self.cfg
        V, T, _ = z.shape
        k = cfg.per_token
        if len(cameras) != V or len(images) != V:
            raise ValueError(f"need {V} images and cameras, got {len(images)} and {len(cameras)}")
        raw = self.head(z)
        n = V * T * k

        view = np.repeat(np.arange(V), T * k)
        center = np.tile(np.repeat(self.centers, k, axis=0), (V, 1))
        rows = np.stack([cameras[v].R for v in view])
        origin = np.stack([cameras[v].center for v in view])
        intr = np.array([[c.fx, c.fy, c.cx, c.cy] for c in cameras])[view]

        lo, hi = cfg.depth_range
        depth = lo + (hi - lo) * ops.sigmoid(raw[:, 0])
        off = ops.tanh(raw[:, OFFSET]) * (cfg.patch / 2.0)
        a = (off[:, 0] + (center[:, 0] - intr[:, 2])) / intr[:, 0]
        b = (off[:, 1] + (center[:, 1] - intr[:, 3])) / intr[:, 1]
        ray = a.reshape(n, 1) * rows[:, 0] + b.reshape(n, 1) * rows[:, 1] + rows[:, 2]
        means = origin + depth.reshape(n, 1) * ray

        footprint = np.log(cfg.scale_fraction * cfg.patch / intr[:, 0])
        log_scales = raw[:, 3:6] + (ops.log(depth) + footprint).reshape(n, 1)
        quats = raw[:, 6:10] + np.array([1.0, 0.0, 0.0, 0.0])
        opacity = raw[:, 10] + cfg.opacity_bias

        src = np.clip(np.repeat(patch_colors(np.asarray(images), cfg.patch).reshape(V * T, 3), k, axis=0),
                      0.01, 0.99)
        colors = ops.sigmoid(raw[:, 11:14] + self.color_skip * np.log(src / (1.0 - src)))

        return GaussianScene(means, log_scales, quats, opacity, colors,
                             source_view=view, source_pixel=center.copy())
