"""Writers for region maps and metric tables."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..splat.io import write_ppm
from .regions import INVALID, OBSERVED, WEAK, RegionMask

REGION_COLORS = {INVALID: (0.0, 0.0, 0.0), OBSERVED: (0.0, 1.0, 0.0), WEAK: (1.0, 0.0, 0.0)}


def write_region_ppm(path, regions: RegionMask) -> None:
    img = np.zeros(regions.labels.shape + (3,))
    for label, color in REGION_COLORS.items():
        img[regions.labels == label] = color
    write_ppm(path, img)


def write_metrics_csv(path, rows: list[dict], meta: dict | None = None) -> None:
    """One row per (scene, view); absent metrics are written as empty cells.

    A JSON sidecar (``<path>.json``) records ``meta`` such as thresholds.
    """
    path = Path(path)
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in keys})
    if meta is not None:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=1, sort_keys=True))
