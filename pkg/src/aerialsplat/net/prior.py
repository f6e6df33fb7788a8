"""Frozen prior-feature stub: pooled image statistics through a fixed random map."""
from __future__ import annotations

import numpy as np

PYRAMID = (1, 2, 4)


def pyramid_cells() -> int:
    return sum(s * s for s in PYRAMID)


def pooled_statistics(images: np.ndarray) -> np.ndarray:
    """Per-view mean and std of RGB over 1x1, 2x2 and 4x4 cells: ``(V, cells, 6)``."""
    images = np.asarray(images, dtype=np.float64)
    V, H, W, _ = images.shape
    out = []
    for s in PYRAMID:
        ys = np.linspace(0, H, s + 1).astype(int)
        xs = np.linspace(0, W, s + 1).astype(int)
        for i in range(s):
            for j in range(s):
                cell = images[:, ys[i]:ys[i + 1], xs[j]:xs[j + 1]].reshape(V, -1, 3)
                out.append(np.concatenate([cell.mean(axis=1), cell.std(axis=1)], axis=1))
    return np.stack(out, axis=1)


class PriorStub:
    """Deterministic stand-in for a frozen pretrained prior backbone.

    Features are ``stats @ W + B[cell]`` with ``W`` and the per-cell bias
    rows ``B`` drawn once from ``seed``. Nothing here is trainable.
    """

    def __init__(self, prior_dim: int, seed: int = 0):
        rng = np.random.default_rng([seed, 7])
        self.weight = rng.normal(0.0, 1.0 / np.sqrt(6.0), (6, prior_dim))
        self.bias = rng.normal(0.0, 1.0, (pyramid_cells(), prior_dim))

    def __call__(self, images: np.ndarray) -> np.ndarray:
        stats = pooled_statistics(images)
        feats = stats @ self.weight + self.bias[None]
        return feats.reshape(-1, feats.shape[-1])


def extract_prior_features(images: np.ndarray, prior_dim: int = 32, seed: int = 0) -> np.ndarray:
    """``(V * cells, prior_dim)`` frozen features for a view set."""
    return PriorStub(prior_dim, seed)(images)
