"""Checkpoints: parameters, AdamW moments and the run configuration in one ANYC file."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..net import AerialSplatNet
from ..numcore import CheckpointFormatError
from ..numcore.serialize import dumps, loads
from .config import TrainConfig
from .optim import OptimizerState


def _encode_json(obj) -> np.ndarray:
    return np.frombuffer(json.dumps(obj, sort_keys=True).encode("utf-8"), dtype=np.uint8).astype(np.float64)


def _decode_json(arr: np.ndarray):
    return json.loads(bytes(arr.astype(np.uint8)).decode("utf-8"))


@dataclass
class Checkpoint:
    params: dict
    optimizer: OptimizerState
    config: TrainConfig
    stage: int
    step: int
    extra: dict = field(default_factory=dict)

    @classmethod
    def capture(cls, net: AerialSplatNet, optimizer: OptimizerState, config: TrainConfig, stage: int, step: int,
                extra: dict | None = None) -> "Checkpoint":
        return cls({p.name: p.data.copy() for p in net.parameters()},
                   OptimizerState({k: v.copy() for k, v in optimizer.m.items()},
                                  {k: v.copy() for k, v in optimizer.v.items()},
                                  optimizer.step, list(optimizer.skipped)),
                   config, stage, step, dict(extra or {}))

    def build_net(self) -> AerialSplatNet:
        """A network with this checkpoint's architecture and weights."""
        net = AerialSplatNet(self.config.net)
        self.apply(net)
        return net

    def apply(self, net: AerialSplatNet) -> None:
        names = {p.name for p in net.parameters()}
        missing = names - self.params.keys()
        if missing:
            raise CheckpointFormatError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for p in net.parameters():
            p.assign(self.params[p.name])

    def to_bytes(self) -> bytes:
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update({f"adam_m/{k}": v for k, v in self.optimizer.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in self.optimizer.v.items()})
        meta = {"config": self.config.to_dict(), "stage": self.stage, "step": self.step,
                "optimizer_step": self.optimizer.step, "skipped": self.optimizer.skipped, "extra": self.extra}
        arrays["meta"] = _encode_json(meta)
        return dumps(arrays)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checkpoint":
        arrays = loads(buf)
        if "meta" not in arrays:
            raise CheckpointFormatError("checkpoint has no metadata record")
        meta = _decode_json(arrays.pop("meta"))
        groups = {"param": {}, "adam_m": {}, "adam_v": {}}
        for key, arr in arrays.items():
            kind, _, name = key.partition("/")
            if kind not in groups:
                raise CheckpointFormatError(f"unexpected record {key!r}")
            groups[kind][name] = arr
        opt = OptimizerState(groups["adam_m"], groups["adam_v"], int(meta["optimizer_step"]), list(meta["skipped"]))
        return cls(groups["param"], opt, TrainConfig.from_dict(meta["config"]), int(meta["stage"]),
                   int(meta["step"]), meta.get("extra", {}))

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())
