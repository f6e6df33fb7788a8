"""Run-directory layout: config snapshot, loss log, evaluations, checkpoints and renders."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from ..diagnostics import write_metrics_csv
from ..losses import FIELDS
from ..splat.io import write_ppm

LOSS_HEADER = ("step",) + FIELDS


class RunDir:
    """``None`` root makes every write a no-op (in-memory runs)."""

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            (self.root / "checkpoints").mkdir(exist_ok=True)
            (self.root / "renders").mkdir(exist_ok=True)

    def write_config(self, config: dict) -> None:
        """Write ``config.json``; an existing snapshot must match exactly."""
        if self.root is None:
            return
        path = self.root / "config.json"
        text = json.dumps(config, indent=1, sort_keys=True)
        if path.exists() and path.read_text() != text:
            raise FileExistsError(f"{path} holds a different configuration")
        path.write_text(text)
        with (self.root / "losses.csv").open("w", newline="") as fh:
            csv.writer(fh).writerow(LOSS_HEADER)

    def log_losses(self, step: int, values: dict) -> None:
        if self.root is None:
            return
        with (self.root / "losses.csv").open("a", newline="") as fh:
            csv.writer(fh).writerow([step] + [repr(float(values[k])) for k in FIELDS])

    def checkpoint_path(self, step: int) -> Path | None:
        return None if self.root is None else self.root / "checkpoints" / f"step{step:03d}.bin"

    def write_eval(self, step: int, evaluation, meta: dict | None = None) -> None:
        if self.root is None:
            return
        write_metrics_csv(self.root / f"eval_step{step:03d}.csv", evaluation.rows, meta)
        for view, rgb in evaluation.renders.items():
            write_ppm(self.root / "renders" / f"step{step:03d}_view{view:02d}.ppm", rgb)

    def write_events(self, events: list[dict]) -> None:
        if self.root is None or not events:
            return
        (self.root / "events.json").write_text(json.dumps(events, indent=1))


def read_losses(path) -> list[dict]:
    with Path(path).open() as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]
