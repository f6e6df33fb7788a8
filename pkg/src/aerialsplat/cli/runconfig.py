"""JSON run configuration with full-key validation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..diagnostics import DiagThresholds
from ..losses import LossWeights
from ..net import NetConfig
from ..scenegen import CityConfig, TrajectoryConfig
from ..trainer import ConfigError, TrainConfig

SECTIONS = {"city": CityConfig, "trajectory": TrajectoryConfig, "net": NetConfig, "train": TrainConfig,
            "weights": LossWeights, "diag": DiagThresholds}


def _build(kind, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"section {where!r} must be an object")
    known = {f.name for f in fields(kind)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where!r}: {sorted(unknown)}")
    try:
        return kind(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class RunConfig:
    """Command sections plus the global seed. Sections left out take their defaults."""

    city: CityConfig = field(default_factory=CityConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    diag: DiagThresholds = field(default_factory=DiagThresholds)
    seed: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(SECTIONS) - {"seed"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for name, kind in SECTIONS.items():
            if name in d:
                values = dict(d[name]) if isinstance(d[name], dict) else d[name]
                if name == "train" and isinstance(values, dict) and ("net" in values or "weights" in values):
                    raise ConfigError("put 'net' and 'weights' at the top level, not inside 'train'")
                kw[name] = _build(kind, values, name)
        seed = d.get("seed")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
            raise ConfigError("seed must be an integer")
        return cls(**kw, seed=seed)

    @classmethod
    def load(cls, path) -> "RunConfig":
        if path is None:
            return cls()
        try:
            text = Path(path).read_text()
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def with_seed(self, seed: int | None) -> "RunConfig":
        """Apply a seed override (flag beats file) to every seeded section."""
        seed = self.seed if seed is None else seed
        if seed is None:
            return self
        from dataclasses import replace
        return RunConfig(replace(self.city, seed=seed), replace(self.trajectory, seed=seed),
                         replace(self.net, seed=seed), replace(self.train, seed=seed), self.weights, self.diag, seed)

    def train_config(self, stage: int, **overrides) -> TrainConfig:
        d = self.train.to_dict()
        d.update(stage=stage, net=self.net.to_dict(), weights=self.weights.to_dict())
        d.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig.from_dict(d)

    def to_dict(self) -> dict:
        out = {name: getattr(self, name).to_dict() for name in SECTIONS}
        out["train"].pop("net")
        out["train"].pop("weights")
        out["seed"] = self.seed
        return out
