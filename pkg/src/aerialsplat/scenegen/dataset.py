"""Ground-truth bundles: rendered views plus the hold-out split."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..splat.camera import Camera
from ..splat.gaussians import GaussianScene
from ..splat.io import (load_scene, read_depth_pgm, read_normal_ppm, read_ppm, save_scene, write_depth_pgm,
                        write_normal_ppm, write_ppm)
from ..splat.reference import render_reference
from ..splat.render import RenderOptions
from .city import CityLayout

HOLDOUT = 8


class DatasetError(ValueError):
    pass


@dataclass
class GroundTruthBundle:
    """Aligned per-view arrays. ``normals`` are world-frame unit vectors (0 where invalid)."""

    images: list[np.ndarray]
    depths: list[np.ndarray]
    normals: list[np.ndarray]
    cameras: list[Camera]
    split: dict
    valid: list[np.ndarray] = field(default_factory=list)
    layout: CityLayout | None = None
    scene: GaussianScene | None = None

    def __post_init__(self):
        n = len(self.cameras)
        if not (len(self.images) == len(self.depths) == len(self.normals) == n):
            raise DatasetError("images, depths, normals and cameras must align")
        if not self.valid:
            self.valid = [d > 0 for d in self.depths]
        ctx, tgt = set(self.split["context"]), set(self.split["target"])
        if ctx & tgt or (ctx | tgt) != set(range(n)):
            raise DatasetError("split must be disjoint and exhaustive")

    def __len__(self) -> int:
        return len(self.cameras)

    @property
    def context(self) -> list[int]:
        return list(self.split["context"])

    @property
    def target(self) -> list[int]:
        return list(self.split["target"])

    def stack_images(self, idx) -> np.ndarray:
        return np.stack([self.images[i] for i in idx])


def holdout_split(n: int, every: int = HOLDOUT) -> dict:
    """Every ``every``-th view (index 0, 8, ...) is a target; the rest are context."""
    target = [i for i in range(n) if i % every == 0]
    return {"context": [i for i in range(n) if i % every != 0], "target": target}


def make_dataset(city: GaussianScene, cameras: list[Camera], opts: RenderOptions | None = None,
                 layout: CityLayout | None = None) -> GroundTruthBundle:
    """Render GT images/depths/normals with the exhaustive reference renderer.

    GT depth is the median (transmittance-crossing) depth, which stays on a
    single surface at silhouettes where the alpha-weighted depth blends layers.
    """
    opts = opts or RenderOptions()
    images, depths, normals, valid = [], [], [], []
    for i, cam in enumerate(cameras):
        out = render_reference(city, cam, opts)
        ok = out.valid
        if not ok.any():
            raise DatasetError(f"camera {i} sees nothing (max alpha {out.alpha.data.max():.3f} < "
                               f"{opts.valid_threshold})")
        images.append(np.clip(out.rgb.data, 0.0, 1.0))
        depths.append(np.where(ok, out.median_depth, 0.0))
        n_world = out.normal.data @ cam.R
        normals.append(np.where(ok[..., None], n_world, 0.0))
        valid.append(ok)
    return GroundTruthBundle(images, depths, normals, list(cameras), holdout_split(len(cameras)), valid,
                             layout if layout is not None else city.meta.get("layout"), city)


def save_bundle(bundle: GroundTruthBundle, root) -> None:
    root = Path(root)
    for sub in ("images", "depth", "normal"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / "cameras.json").write_text(json.dumps([c.to_dict() for c in bundle.cameras], indent=1))
    (root / "split.json").write_text(json.dumps(bundle.split))
    for i in range(len(bundle)):
        write_ppm(root / "images" / f"{i:03d}.ppm", bundle.images[i])
        write_depth_pgm(root / "depth" / f"{i:03d}.pgm16", np.where(bundle.valid[i], bundle.depths[i], 0.0))
        write_normal_ppm(root / "normal" / f"{i:03d}.ppm", bundle.normals[i])
    if bundle.layout is not None:
        (root / "layout.json").write_text(json.dumps(bundle.layout.to_dict(), indent=1))
    if bundle.scene is not None:
        save_scene(root / "scene.splat", bundle.scene)


def load_bundle(root) -> GroundTruthBundle:
    root = Path(root)
    cams = [Camera.from_dict(d) for d in json.loads((root / "cameras.json").read_text())]
    split = json.loads((root / "split.json").read_text())
    images, depths, normals = [], [], []
    for i in range(len(cams)):
        images.append(read_ppm(root / "images" / f"{i:03d}.ppm"))
        depths.append(read_depth_pgm(root / "depth" / f"{i:03d}.pgm16"))
        normals.append(read_normal_ppm(root / "normal" / f"{i:03d}.ppm"))
    valid = [d > 0 for d in depths]
    normals = [np.where(v[..., None], n / np.maximum(np.linalg.norm(n, axis=-1, keepdims=True), 1e-12), 0.0)
               for n, v in zip(normals, valid)]
    layout = None
    if (root / "layout.json").exists():
        layout = CityLayout.from_dict(json.loads((root / "layout.json").read_text()))
    scene = load_scene(root / "scene.splat") if (root / "scene.splat").exists() else None
    return GroundTruthBundle(images, depths, normals, cams, split, valid, layout, scene)
