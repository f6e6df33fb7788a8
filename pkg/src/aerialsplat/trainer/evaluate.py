"""Feed-forward reconstruction and held-out evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diagnostics import DiagThresholds, absrel, classify_regions, delta1, psnr, region_metrics, ssim
from ..net import AerialSplatNet, Reconstruction
from ..numcore import no_grad
from ..scenegen import GroundTruthBundle
from ..splat import RenderOptions, render
from .views import spread_views


def default_views(bundle: GroundTruthBundle, stage: int, n_context: int, n_student: int) -> list[int]:
    """Evaluation inputs: the stage-1 context set or the stage-2 student set."""
    return spread_views(bundle.context, n_context if stage == 1 else n_student, len(bundle))


def reconstruct(net: AerialSplatNet, images: np.ndarray, cameras: list, mode: str = "full") -> Reconstruction:
    """One feed-forward pass from context images and cameras only."""
    with no_grad():
        return net(images, cameras, mode=mode)


@dataclass
class Evaluation:
    rows: list[dict]
    renders: dict = field(default_factory=dict)   # target view -> rgb array
    depths: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)
    views: list = field(default_factory=list)


def evaluate_net(net: AerialSplatNet, bundle: GroundTruthBundle, mode: str, views: list[int],
                 targets: list[int] | None = None, thresholds: DiagThresholds | None = None,
                 opts: RenderOptions | None = None, scene_name: str = "toy") -> Evaluation:
    """Reconstruct from ``views`` and score renders at the held-out ``targets``.

    Target images are read only after the reconstruction is complete.
    """
    targets = bundle.target if targets is None else list(targets)
    overlap = set(views) & set(targets)
    if overlap:
        raise ValueError(f"views {sorted(overlap)} are both inputs and targets")
    cams = [bundle.cameras[i] for i in views]
    rec = reconstruct(net, bundle.stack_images(views), cams, mode)
    th = thresholds or DiagThresholds()
    ev = Evaluation([], views=list(views))
    for t in targets:
        with no_grad():
            out = render(rec.scene, bundle.cameras[t], opts)
        rgb, depth = out.rgb.data, out.depth.data
        gt_rgb, gt_depth, valid = bundle.images[t], bundle.depths[t], bundle.valid[t]
        regions = classify_regions(gt_depth, bundle.cameras[t], [bundle.depths[i] for i in views], cams, th)
        row = {"scene": scene_name, "view": t, "mode": mode, "psnr": psnr(rgb, gt_rgb), "ssim": ssim(rgb, gt_rgb),
               "delta1": delta1(depth, gt_depth, valid), "absrel": absrel(depth, gt_depth, valid)}
        row.update(region_metrics(rgb, gt_rgb, regions))
        ev.rows.append(row)
        ev.renders[t], ev.depths[t], ev.regions[t] = rgb, depth, regions
    return ev


def mean_metric(rows: list[dict], key: str) -> float | None:
    vals = [r[key] for r in rows if r.get(key) is not None]
    return float(np.mean(vals)) if vals else None
