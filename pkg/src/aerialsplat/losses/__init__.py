"""Stage I and Stage II objectives."""
from .terms import (MIN_ALIGN_PIXELS, Alignment, EmptyMaskWarning, SurfaceNormals, align_affine_invdepth,
                    loss_d2s, loss_depth_z, loss_normal, loss_pres, loss_pres_renders, loss_ray_anchor, loss_reg,
                    loss_rgb, solve_affine, structure_weight, surface_normal_from_depth)
from .weights import FIELDS, LossReport, LossWeights, recombine, stage1_total, stage2_total

__all__ = [
    "FIELDS", "MIN_ALIGN_PIXELS", "Alignment", "EmptyMaskWarning", "LossReport", "LossWeights", "SurfaceNormals",
    "align_affine_invdepth", "loss_d2s", "loss_depth_z", "loss_normal", "loss_pres", "loss_pres_renders",
    "loss_ray_anchor", "loss_reg", "loss_rgb", "recombine", "solve_affine", "stage1_total", "stage2_total",
    "structure_weight", "surface_normal_from_depth",
]
