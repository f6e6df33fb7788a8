"""Full reconstruction network: encoder, completion branch and shared decoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import Parameter, Tensor
from ..splat.camera import Camera
from ..splat.gaussians import GaussianScene
from .completion import CompletionBranch, CompletionOutput, compose_latent
from .config import NetConfig
from .decoder import GaussianDecoder
from .encoder import GeometryEncoder, TokenField
from .layers import Module
from .prior import PriorStub


@dataclass
class Reconstruction:
    scene: GaussianScene
    z_geo: TokenField
    z_final: TokenField
    delta: TokenField | None
    gates: list[Tensor]


class AerialSplatNet(Module):
    """Feed-forward sparse-view reconstruction.

    ``mode='scaffold'`` decodes ``Z_geo`` directly (the observation-supported
    pathway). ``mode='full'`` adds the completion residual before decoding.
    """

    def __init__(self, cfg: NetConfig | None = None):
        super().__init__("net")
        self.cfg = cfg = cfg or NetConfig()
        rng = np.random.default_rng(cfg.seed)
        self.encoder = self.child(GeometryEncoder(cfg, rng))
        self.decoder = self.child(GaussianDecoder(cfg, rng))
        self.completion = self.child(CompletionBranch(cfg, rng))
        self.prior = PriorStub(cfg.prior_dim, cfg.seed)

    def scaffold_parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.decoder.parameters()

    def completion_parameters(self) -> list[Parameter]:
        return self.completion.parameters()

    def encode(self, images: np.ndarray):
        return self.encoder(np.asarray(images, dtype=np.float64))

    def complete(self, fields, z_geo: TokenField, images: np.ndarray, prior_features=None) -> CompletionOutput:
        feats = self.prior(images) if prior_features is None else prior_features
        return self.completion(fields, z_geo, feats)

    def decode(self, z: TokenField, images: np.ndarray, cameras: list[Camera]) -> GaussianScene:
        return self.decoder(z, np.asarray(images, dtype=np.float64), cameras)

    def __call__(self, images: np.ndarray, cameras: list[Camera], mode: str = "full",
                 prior_features=None) -> Reconstruction:
        if mode not in ("full", "scaffold"):
            raise ValueError(f"unknown mode {mode!r}")
        images = np.asarray(images, dtype=np.float64)
        fields, z_geo = self.encode(images)
        if mode == "scaffold":
            return Reconstruction(self.decode(z_geo, images, cameras), z_geo, z_geo, None, [])
        out = self.complete(fields, z_geo, images, prior_features)
        z_final = compose_latent(z_geo, out.delta)
        return Reconstruction(self.decode(z_final, images, cameras), z_geo, z_final, out.delta, out.gates)
