"""Geometry encoder: patch tokens refined by alternating frame/global attention."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import Tensor
from .config import NetConfig
from .layers import MLP, Attention, LayerNorm, Linear, Module, sincos_2d


@dataclass
class TokenField:
    """``tokens`` has shape ``(V, T, D)``; ``layer`` is the producing encoder layer (1-based)."""

    tokens: Tensor
    layer: int

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tokens.shape


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """``(V, H, W, 3)`` -> ``(V, T, patch*patch*3)`` in row-major patch order."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[-1] != 3:
        raise ValueError(f"expected (V, H, W, 3) images, got {images.shape}")
    V, H, W, _ = images.shape
    if H % patch or W % patch:
        raise ValueError(f"image size {H}x{W} not divisible by patch {patch}")
    x = images.reshape(V, H // patch, patch, W // patch, patch, 3).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(V, (H // patch) * (W // patch), patch * patch * 3)


class Block(Module):
    """Pre-norm transformer block; ``scope`` is ``frame`` (per view) or ``global`` (all views)."""

    def __init__(self, name: str, cfg: NetConfig, scope: str, rng):
        super().__init__(name)
        self.scope = scope
        self.ln1 = self.child(LayerNorm(f"{name}.ln1", cfg.dim))
        self.attn = self.child(Attention(f"{name}.attn", cfg.dim, cfg.heads, rng))
        self.ln2 = self.child(LayerNorm(f"{name}.ln2", cfg.dim))
        self.mlp = self.child(MLP(f"{name}.mlp", cfg.dim, cfg.mlp_ratio * cfg.dim, rng))

    def __call__(self, x: Tensor) -> Tensor:
        V, T, D = x.shape
        h = self.ln1(x)
        if self.scope == "global":
            h = h.reshape(1, V * T, D)
        x = x + self.attn(h, h).reshape(V, T, D)
        return x + self.mlp(self.ln2(x))


class GeometryEncoder(Module):
    def __init__(self, cfg: NetConfig, rng: np.random.Generator, name: str = "encoder"):
        super().__init__(name)
        self.cfg = cfg
        self.embed = self.child(Linear(f"{name}.embed", 3 * cfg.patch ** 2, cfg.dim, rng))
        self.view_embed = self.param("view_embed", rng.normal(0.0, 0.02, (cfg.max_views, cfg.dim)))
        self.pos = sincos_2d(*cfg.grid, cfg.dim)
        self.blocks = [self.child(Block(f"{name}.block{i}", cfg, "frame" if i % 2 == 0 else "global", rng))
                       for i in range(cfg.layers)]

    def __call__(self, images: np.ndarray) -> tuple[dict[int, TokenField], TokenField]:
        """Return the retained intermediate fields (keyed by 1-based layer) and ``Z_geo``."""
        cfg = self.cfg
        V = len(images)
        if V < 1 or V > cfg.max_views:
            raise ValueError(f"need 1..{cfg.max_views} views, got {V}")
        if tuple(np.shape(images)[1:3]) != cfg.image_size:
            raise ValueError(f"images must be {cfg.image_size}, got {np.shape(images)[1:3]}")
        x = self.embed(patchify(images, cfg.patch) - 0.5)
        x = x + self.pos + self.view_embed[:V].reshape(V, 1, cfg.dim)
        fields = {}
        for i, block in enumerate(self.blocks, start=1):
            x = block(x)
            if i in cfg.inject_layers:
                fields[i] = TokenField(x, i)
        return fields, TokenField(x, cfg.layers)
