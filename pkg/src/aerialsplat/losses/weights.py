"""Loss weights and per-step loss reports."""
from __future__ import annotations

from dataclasses import asdict, dataclass

from ..numcore import Tensor

FIELDS = ("rgb", "depth_z", "depth_xy", "normal", "d2s_rgb", "d2s_depth", "pres",
          "reg_residual", "reg_gate", "reg_gauss", "total")


@dataclass
class LossWeights:
    depth: float = 0.1
    normal: float = 0.1
    d: float = 1.0          # depth term inside the distillation loss
    d2s: float = 1.0
    pres: float = 0.1
    reg: float = 0.01
    flat: float = 0.01
    huber_delta: float = 0.1
    xy: float = 1.0         # multiplier on L_xy inside L_depth (sets its unit)

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be >= 0")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossReport:
    """Scalar components (floats) plus the differentiable ``total``."""

    values: dict
    total: Tensor
    flags: tuple = ()

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def row(self) -> list[float]:
        return [self.values[k] for k in FIELDS]


def _value(t) -> float:
    return float(t.data) if isinstance(t, Tensor) else float(t)


def _report(parts: dict, total: Tensor, flags=()) -> LossReport:
    values = {k: 0.0 for k in FIELDS}
    for k, v in parts.items():
        if k not in values or k == "total":
            raise KeyError(f"unknown loss component {k!r}")
        values[k] = _value(v)
    values["total"] = float(total.data)
    return LossReport(values, total, tuple(flags))


def _zero() -> Tensor:
    return Tensor(0.0)


def stage1_total(parts: dict, w: LossWeights, flags=()) -> LossReport:
    """``rgb + depth_w * (z + xy_w * xy) + normal_w * normal``."""
    g = lambda k: parts.get(k, _zero())  # noqa: E731
    total = g("rgb") + w.depth * (g("depth_z") + w.xy * g("depth_xy")) + w.normal * g("normal")
    return _report(parts, total, flags)


def stage2_total(parts: dict, w: LossWeights, flags=()) -> LossReport:
    """``rgb + d2s_w * (d2s_rgb + d * d2s_depth) + pres_w * pres + reg_w * (residual + gate + gauss)``."""
    g = lambda k: parts.get(k, _zero())  # noqa: E731
    total = (g("rgb") + w.d2s * (g("d2s_rgb") + w.d * g("d2s_depth")) + w.pres * g("pres")
             + w.reg * (g("reg_residual") + g("reg_gate") + g("reg_gauss")))
    return _report(parts, total, flags)


def recombine(values: dict, w: LossWeights, stage: int) -> float:
    """Recompute the total from reported floats (used to check reports)."""
    v = values
    if stage == 1:
        return v["rgb"] + w.depth * (v["depth_z"] + w.xy * v["depth_xy"]) + w.normal * v["normal"]
    return (v["rgb"] + w.d2s * (v["d2s_rgb"] + w.d * v["d2s_depth"]) + w.pres * v["pres"]
            + w.reg * (v["reg_residual"] + v["reg_gate"] + v["reg_gauss"]))
