"""Tile-binned front-to-back rasterization of projected splats.

Splats arrive already sorted front to back. Each pixel composites
``c = sum_i f_i a_i T_i`` with ``a_i = o_i exp(-0.5 d^T conic_i d)`` and
``T_i = prod_{j<i} (1 - a_j)``. Besides the constant per-splat features ``f_i``
one channel composites a per-pixel depth: the camera z of the point of
maximum density of Gaussian ``i`` along the pixel ray ``r = (x', y', 1)``,
``z_i = r.b_i / r.Q_i r`` with ``Q_i`` the camera-frame precision matrix and
``b_i = Q_i mu_i``. For a thin disc this is the ray/disc-plane intersection. Two optional shortcuts mirror the usual GPU
rasterizer: contributions with ``a_i < alpha_min`` are skipped, and a pixel
stops once its transmittance falls below ``t_min`` (the contribution that
crossed the threshold is kept). Setting either to 0 disables it.

The backward pass replays each pixel's contribution list and walks it back to
front with a running "color behind" accumulator, so no division by
``1 - a_i`` is needed even for fully opaque splats.
"""
from __future__ import annotations

import numba
import numpy as np

from ..numcore import Tensor, make_node, ops
from ..numcore.ops import register

TILE = 16


@numba.njit(cache=True)
def _bin_tiles(mean2d, conic, opacity, alpha_min, width, height, tile):
    n = mean2d.shape[0]
    tiles_x = (width + tile - 1) // tile
    tiles_y = (height + tile - 1) // tile
    rect = np.zeros((n, 4), dtype=np.int64)
    counts = np.zeros(tiles_x * tiles_y + 1, dtype=np.int64)
    for i in range(n):
        a, b, c = conic[i, 0], conic[i, 1], conic[i, 2]
        det = a * c - b * b
        if alpha_min > 0.0:
            if opacity[i] < alpha_min or det <= 0.0:
                rect[i, 0] = 0
                rect[i, 1] = -1
                continue
            r2 = 2.0 * np.log(opacity[i] / alpha_min)
            ex = np.sqrt(r2 * c / det) + 1e-9
            ey = np.sqrt(r2 * a / det) + 1e-9
            x0 = int(np.floor((mean2d[i, 0] - ex) / tile))
            x1 = int(np.floor((mean2d[i, 0] + ex) / tile))
            y0 = int(np.floor((mean2d[i, 1] - ey) / tile))
            y1 = int(np.floor((mean2d[i, 1] + ey) / tile))
            x0 = max(x0, 0)
            y0 = max(y0, 0)
            x1 = min(x1, tiles_x - 1)
            y1 = min(y1, tiles_y - 1)
        else:
            x0, y0, x1, y1 = 0, 0, tiles_x - 1, tiles_y - 1
        if x1 < x0 or y1 < y0:
            rect[i, 0] = 0
            rect[i, 1] = -1
            continue
        rect[i, 0] = x0
        rect[i, 1] = x1
        rect[i, 2] = y0
        rect[i, 3] = y1
        for ty in range(y0, y1 + 1):
            for tx in range(x0, x1 + 1):
                counts[ty * tiles_x + tx + 1] += 1
    offsets = np.cumsum(counts)
    ids = np.empty(offsets[-1], dtype=np.int64)
    fill = offsets[:-1].copy()
    for i in range(n):
        if rect[i, 1] < rect[i, 0]:
            continue
        for ty in range(rect[i, 2], rect[i, 3] + 1):
            for tx in range(rect[i, 0], rect[i, 1] + 1):
                t = ty * tiles_x + tx
                ids[fill[t]] = i
                fill[t] += 1
    return offsets, ids


@numba.njit(cache=True, inline="always")
def _ray_depth(rq, i, xr, yr):
    den = (rq[i, 3] * xr * xr + 2.0 * rq[i, 4] * xr * yr + 2.0 * rq[i, 5] * xr
           + rq[i, 6] * yr * yr + 2.0 * rq[i, 7] * yr + rq[i, 8])
    return (rq[i, 0] * xr + rq[i, 1] * yr + rq[i, 2]) / den, den


@numba.njit(cache=True)
def _forward(mean2d, conic, opacity, feats, rq, intr, offsets, ids, width, height, tile, alpha_min, t_min):
    nc = feats.shape[1]
    out = np.zeros((height, width, nc + 2))
    tiles_x = (width + tile - 1) // tile
    for py in range(height):
        for px in range(width):
            t = (py // tile) * tiles_x + (px // tile)
            xr = (px - intr[2]) / intr[0]
            yr = (py - intr[3]) / intr[1]
            T = 1.0
            for k in range(offsets[t], offsets[t + 1]):
                i = ids[k]
                dx = px - mean2d[i, 0]
                dy = py - mean2d[i, 1]
                power = -0.5 * (conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy + conic[i, 2] * dy * dy)
                a = opacity[i] * np.exp(power)
                if a < alpha_min:
                    continue
                w = a * T
                for c in range(nc):
                    out[py, px, c] += feats[i, c] * w
                z, _ = _ray_depth(rq, i, xr, yr)
                out[py, px, nc] += z * w
                T = T * (1.0 - a)
                if T < t_min:
                    break
            out[py, px, nc + 1] = 1.0 - T
    return out


@numba.njit(cache=True)
def _backward(mean2d, conic, opacity, feats, rq, intr, offsets, ids, width, height, tile, alpha_min, t_min,
              gout):
    n = mean2d.shape[0]
    nc = feats.shape[1]
    g_mean = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_opac = np.zeros(n)
    g_feat = np.zeros((n, nc))
    g_rq = np.zeros((n, 9))
    tiles_x = (width + tile - 1) // tile
    maxlen = 0
    for t in range(offsets.shape[0] - 1):
        maxlen = max(maxlen, offsets[t + 1] - offsets[t])
    s_idx = np.empty(maxlen, dtype=np.int64)
    s_a = np.empty(maxlen)
    s_g = np.empty(maxlen)
    s_T = np.empty(maxlen)
    s_dx = np.empty(maxlen)
    s_dy = np.empty(maxlen)
    s_z = np.empty(maxlen)
    s_den = np.empty(maxlen)
    behind = np.empty(nc + 2)
    for py in range(height):
        for px in range(width):
            t = (py // tile) * tiles_x + (px // tile)
            xr = (px - intr[2]) / intr[0]
            yr = (py - intr[3]) / intr[1]
            T = 1.0
            m = 0
            for k in range(offsets[t], offsets[t + 1]):
                i = ids[k]
                dx = px - mean2d[i, 0]
                dy = py - mean2d[i, 1]
                power = -0.5 * (conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy + conic[i, 2] * dy * dy)
                gval = np.exp(power)
                a = opacity[i] * gval
                if a < alpha_min:
                    continue
                s_idx[m] = i
                s_a[m] = a
                s_g[m] = gval
                s_T[m] = T
                s_dx[m] = dx
                s_dy[m] = dy
                s_z[m], s_den[m] = _ray_depth(rq, i, xr, yr)
                m += 1
                T = T * (1.0 - a)
                if T < t_min:
                    break
            for c in range(nc + 2):
                behind[c] = 0.0
            gz = gout[py, px, nc]
            ga = gout[py, px, nc + 1]
            for j in range(m - 1, -1, -1):
                i = s_idx[j]
                a = s_a[j]
                Tj = s_T[j]
                z = s_z[j]
                dl_da = 0.0
                for c in range(nc):
                    gc = gout[py, px, c]
                    g_feat[i, c] += gc * a * Tj
                    dl_da += gc * (feats[i, c] - behind[c]) * Tj
                dl_da += gz * (z - behind[nc]) * Tj
                dl_da += ga * (1.0 - behind[nc + 1]) * Tj
                for c in range(nc):
                    behind[c] = feats[i, c] * a + (1.0 - a) * behind[c]
                behind[nc] = z * a + (1.0 - a) * behind[nc]
                behind[nc + 1] = a + (1.0 - a) * behind[nc + 1]
                gzi = gz * a * Tj / s_den[j]
                g_rq[i, 0] += gzi * xr
                g_rq[i, 1] += gzi * yr
                g_rq[i, 2] += gzi
                g_rq[i, 3] -= gzi * z * xr * xr
                g_rq[i, 4] -= gzi * z * 2.0 * xr * yr
                g_rq[i, 5] -= gzi * z * 2.0 * xr
                g_rq[i, 6] -= gzi * z * yr * yr
                g_rq[i, 7] -= gzi * z * 2.0 * yr
                g_rq[i, 8] -= gzi * z
                g_opac[i] += dl_da * s_g[j]
                dp = dl_da * a
                dx = s_dx[j]
                dy = s_dy[j]
                g_mean[i, 0] += dp * (conic[i, 0] * dx + conic[i, 1] * dy)
                g_mean[i, 1] += dp * (conic[i, 1] * dx + conic[i, 2] * dy)
                g_conic[i, 0] += dp * (-0.5 * dx * dx)
                g_conic[i, 1] += dp * (-dx * dy)
                g_conic[i, 2] += dp * (-0.5 * dy * dy)
    return g_mean, g_conic, g_opac, g_feat, g_rq


@register("rasterize")
def rasterize(mean2d, conic, opacity, feats, ray_quad, intrinsics, width: int, height: int,
              alpha_min: float = 1.0 / 255.0, t_min: float = 1e-4, tile: int = TILE) -> Tensor:
    """Composite sorted splats into an ``(H, W, C + 2)`` map.

    Channels are the ``C`` features, ray depth, then alpha. ``ray_quad`` rows
    hold ``(b0, b1, b2, Q00, Q01, Q02, Q11, Q12, Q22)``; ``intrinsics`` is the
    constant ``(fx, fy, cx, cy)``.
    """
    mean2d, conic, opacity, feats, ray_quad = (ops.as_tensor(x) for x in (mean2d, conic, opacity, feats, ray_quad))
    intr = np.asarray(intrinsics, dtype=np.float64)
    args = (np.ascontiguousarray(mean2d.data), np.ascontiguousarray(conic.data),
            np.ascontiguousarray(opacity.data), np.ascontiguousarray(feats.data),
            np.ascontiguousarray(ray_quad.data), intr)
    offsets, ids = _bin_tiles(args[0], args[1], args[2], float(alpha_min), int(width), int(height), int(tile))
    out = _forward(*args, offsets, ids, int(width), int(height), int(tile), float(alpha_min), float(t_min))

    def bw(g):
        return _backward(*args, offsets, ids, int(width), int(height), int(tile),
                         float(alpha_min), float(t_min), np.ascontiguousarray(g))

    return make_node(out, (mean2d, conic, opacity, feats, ray_quad), bw, "rasterize")
