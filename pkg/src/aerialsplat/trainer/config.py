"""Training hyper-parameters."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

from ..losses import LossWeights
from ..net import NetConfig

DEFAULT_LR = {1: 2e-3, 2: 1e-3}


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    """One training run. ``lr=None`` picks the stage default (2e-3 / 1e-3).

    ``context_views`` is the stage-1 input count, ``student_views`` and
    ``teacher_views`` the stage-2 sparse and dense sets. ``targets_per_step``
    held-out training views are rendered each step in addition to the
    stage-1 contexts (stage 2: as the L_rgb supervision); ``d2s_cameras``
    cameras form the distillation set.
    """

    stage: int = 1
    steps: int = 600
    lr: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    warmup_frac: float = 0.05
    context_views: int = 8
    student_views: int = 4
    teacher_views: int = 12
    targets_per_step: int = 2
    d2s_cameras: int = 4
    eval_every: int = 0
    checkpoint_every: int = 0
    seed: int = 0
    net: NetConfig = field(default_factory=NetConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    data: str | None = None
    init: str | None = None
    out: str | None = None

    def __post_init__(self):
        if isinstance(self.net, dict):
            self.net = NetConfig(**self.net)
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.stage not in (1, 2):
            raise ConfigError("stage must be 1 or 2")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigError("invalid AdamW constants")
        if self.weight_decay < 0 or self.clip_norm <= 0 or not 0 <= self.warmup_frac < 1:
            raise ConfigError("weight_decay >= 0, clip_norm > 0 and 0 <= warmup_frac < 1 required")
        if min(self.context_views, self.student_views, self.d2s_cameras) < 1 or self.targets_per_step < 0:
            raise ConfigError("view counts must be positive")
        if self.stage == 2 and self.teacher_views <= self.student_views:
            raise ConfigError("teacher_views must exceed student_views")

    @property
    def peak_lr(self) -> float:
        return DEFAULT_LR[self.stage] if self.lr is None else self.lr

    def lr_at(self, step: int) -> float:
        """Linear warmup over the first ``warmup_frac`` of steps, then constant."""
        warm = int(round(self.warmup_frac * self.steps))
        if warm and step < warm:
            return self.peak_lr * (step + 1) / warm
        return self.peak_lr

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["net"] = self.net.to_dict()
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys: {sorted(unknown)}")
        d = dict(d)
        try:
            if isinstance(d.get("net"), dict):
                d["net"] = NetConfig(**d["net"])
            if isinstance(d.get("weights"), dict):
                d["weights"] = LossWeights(**d["weights"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


