"""Scene and image files.

Scenes use the common splat-viewer tabular layout: one little-endian float32
record per primitive, preceded by a single text header line naming the
fields in order. Images are binary PPM (P6) and 16-bit PGM (P5) for depth,
with the depth scale stored in a ``.scale`` sidecar.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .gaussians import GaussianScene

SH_C0 = 0.28209479177387814
FIELDS = ("x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
          "opacity", "f_dc_0", "f_dc_1", "f_dc_2")
HEADER_PREFIX = "splat-f32le"


class SceneFormatError(ValueError):
    pass


def scene_to_records(scene: GaussianScene) -> np.ndarray:
    d = scene.numpy()
    f_dc = (d["colors"] - 0.5) / SH_C0
    rec = np.concatenate([d["means"], d["log_scales"], d["rotations"], d["opacity_logits"][:, None], f_dc], axis=1)
    return rec.astype("<f4")


def records_to_scene(rec: np.ndarray) -> GaussianScene:
    rec = np.asarray(rec, dtype=np.float64)
    return GaussianScene(rec[:, 0:3], rec[:, 3:6], rec[:, 6:10], rec[:, 10],
                         np.clip(rec[:, 11:14] * SH_C0 + 0.5, 0.0, 1.0))


def save_scene(path, scene: GaussianScene) -> None:
    rec = scene_to_records(scene)
    header = f"{HEADER_PREFIX} {len(rec)} {' '.join(FIELDS)}\n".encode("ascii")
    Path(path).write_bytes(header + rec.tobytes())


def load_scene(path) -> GaussianScene:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise SceneFormatError("missing header line")
    parts = raw[:nl].decode("ascii", errors="replace").split()
    if len(parts) < 2 or parts[0] != HEADER_PREFIX:
        raise SceneFormatError("not a splat scene file")
    n = int(parts[1])
    fields = tuple(parts[2:])
    if fields != FIELDS:
        raise SceneFormatError(f"unsupported field layout {fields}")
    body = raw[nl + 1:]
    if len(body) != n * len(FIELDS) * 4:
        raise SceneFormatError(f"expected {n} records, got {len(body)} bytes")
    return records_to_scene(np.frombuffer(body, dtype="<f4").reshape(n, len(FIELDS)))


def _read_pnm(path) -> tuple[str, int, int, int, bytes]:
    raw = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    return tokens[0].decode(), int(tokens[1]), int(tokens[2]), int(tokens[3]), raw[pos + 1:]


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an ``(H, W, 3)`` float image in [0, 1] as 8-bit binary PPM."""
    img = np.clip(np.round(np.asarray(rgb, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_ppm(path) -> np.ndarray:
    magic, w, h, maxval, body = _read_pnm(path)
    if magic != "P6" or maxval != 255:
        raise ValueError(f"{path}: expected 8-bit P6")
    return np.frombuffer(body[:w * h * 3], dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


def write_depth_pgm(path, depth: np.ndarray, scale: float | None = None) -> float:
    """Store depth as 16-bit PGM; ``value = round(depth / scale)``. Returns the scale."""
    depth = np.asarray(depth, dtype=np.float64)
    if scale is None:
        top = float(depth.max()) if depth.size else 0.0
        scale = top / 65535.0 if top > 0 else 1.0
    q = np.clip(np.round(depth / scale), 0, 65535).astype(">u2")
    h, w = depth.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + q.tobytes())
    Path(str(path) + ".scale").write_text(f"{scale!r}\n")
    return scale


def read_depth_pgm(path) -> np.ndarray:
    magic, w, h, maxval, body = _read_pnm(path)
    if magic != "P5" or maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit P5")
    scale = float(Path(str(path) + ".scale").read_text().strip())
    return np.frombuffer(body[:w * h * 2], dtype=">u2").reshape(h, w).astype(np.float64) * scale


def write_normal_ppm(path, normal: np.ndarray) -> None:
    write_ppm(path, (np.asarray(normal, dtype=np.float64) + 1.0) * 0.5)


def read_normal_ppm(path) -> np.ndarray:
    return read_ppm(path) * 2.0 - 1.0
