"""Image and depth metrics with optional pixel masks."""
from __future__ import annotations

import numpy as np

from .regions import OBSERVED, WEAK, RegionMask

PSNR_CAP = 99.0


def _mask(mask, shape) -> np.ndarray:
    return np.ones(shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)


def psnr(a: np.ndarray, b: np.ndarray, mask=None) -> float | None:
    """PSNR in dB for images in [0, 1], capped at 99; ``None`` for an empty mask."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    m = _mask(mask, a.shape[:2])
    if not m.any():
        return None
    mse = float(np.mean((a[m] - b[m]) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of a 2D image with window ``g``."""
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=1) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=0) @ g


def ssim(a: np.ndarray, b: np.ndarray, mask=None, size: int = 11, sigma: float = 1.5) -> float | None:
    """Mean SSIM over window centers whose full window fits and whose center is masked in.

    Channels are handled independently and averaged.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    H, W = a.shape[:2]
    if H < size or W < size:
        raise ValueError(f"image smaller than the {size}x{size} window")
    half = size // 2
    m = _mask(mask, (H, W))[half:H - half, half:W - half]
    if not m.any():
        return None
    g = gaussian_window(size, sigma)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    maps = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        maps.append(((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2)))
    return float(np.mean(np.mean(maps, axis=0)[m]))


def _depth_pair(pred, ref, mask):
    pred, ref = np.asarray(pred, dtype=np.float64), np.asarray(ref, dtype=np.float64)
    m = _mask(mask, ref.shape) & (ref > 0)
    return pred[m], ref[m]


def delta1(pred: np.ndarray, ref: np.ndarray, mask=None) -> float | None:
    """Fraction of pixels with ``max(d/d*, d*/d) < 1.25``."""
    p, r = _depth_pair(pred, ref, mask)
    if not len(r):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(p / r, r / p)
    return float(np.mean(np.where(p > 0, ratio, np.inf) < 1.25))


def absrel(pred: np.ndarray, ref: np.ndarray, mask=None) -> float | None:
    """Mean ``|d - d*| / d*``."""
    p, r = _depth_pair(pred, ref, mask)
    if not len(r):
        return None
    return float(np.mean(np.abs(p - r) / r))


def region_metrics(pred: np.ndarray, gt: np.ndarray, regions: RegionMask) -> dict:
    """PSNR restricted to observed and weak pixels; empty regions are left out."""
    out = {}
    for name, label in (("obs", OBSERVED), ("weak", WEAK)):
        m = regions.labels == label
        out[f"{name}_count"] = int(m.sum())
        value = psnr(pred, gt, m)
        if value is not None:
            out[f"{name}_psnr"] = value
    return out
