"""Region diagnostics and evaluation metrics."""
from .export import REGION_COLORS, write_metrics_csv, write_region_ppm
from .metrics import PSNR_CAP, absrel, delta1, gaussian_window, psnr, region_metrics, ssim
from .regions import (INVALID, OBSERVED, REGION_NAMES, WEAK, DiagThresholds, RegionMask, classify_regions,
                      classify_regions_raycast, depth_discontinuity, max_pairwise_angle)

__all__ = [
    "INVALID", "OBSERVED", "PSNR_CAP", "REGION_COLORS", "REGION_NAMES", "WEAK", "DiagThresholds", "RegionMask",
    "absrel", "classify_regions", "classify_regions_raycast", "delta1", "depth_discontinuity", "gaussian_window",
    "max_pairwise_angle", "psnr", "region_metrics", "ssim", "write_metrics_csv", "write_region_ppm",
]
