"""Completion branch: learned tokens that read the scaffold and a gated prior."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import Tensor, as_tensor, ops
from .config import NetConfig
from .encoder import TokenField
from .layers import Attention, LayerNorm, Linear, Module


def _flat(field: TokenField) -> Tensor:
    V, T, D = field.shape
    return field.tokens.reshape(1, V * T, D)


class ScaffoldCrossAttention(Module):
    """``Z~ = Z_comp + CrossAttn(Z_comp, Z_geo^l)``; the geometry stream is only read."""

    def __init__(self, name: str, cfg: NetConfig, rng, out_std: float | None = None):
        super().__init__(name)
        self.ln_q = self.child(LayerNorm(f"{name}.ln_q", cfg.dim))
        self.ln_kv = self.child(LayerNorm(f"{name}.ln_kv", cfg.dim))
        self.attn = self.child(Attention(f"{name}.attn", cfg.dim, cfg.heads, rng, out_std=out_std))

    def __call__(self, z_comp: Tensor, geo: TokenField) -> Tensor:
        kv = self.ln_kv(_flat(geo))
        return z_comp + self.attn(self.ln_q(z_comp).reshape(1, *z_comp.shape), kv).reshape(z_comp.shape)


class GatedPriorAttention(Module):
    """``Z + g * CrossAttn(Z, F_vid)`` with a per-token gate ``g = sigmoid(h(Z))``."""

    def __init__(self, name: str, cfg: NetConfig, rng, out_std: float | None = None):
        super().__init__(name)
        self.ln_q = self.child(LayerNorm(f"{name}.ln_q", cfg.dim))
        self.ln_kv = self.child(LayerNorm(f"{name}.ln_kv", cfg.dim))
        self.attn = self.child(Attention(f"{name}.attn", cfg.dim, cfg.heads, rng, out_std=out_std))
        self.gate = self.child(Linear(f"{name}.gate", cfg.dim, 1, rng, std=0.02))
        self.gate.w.decay = False  # gates are not decayed

    def update(self, z: Tensor, f_vid: Tensor) -> Tensor:
        """The ungated cross-attention update."""
        kv = self.ln_kv(f_vid).reshape(1, *f_vid.shape)
        return self.attn(self.ln_q(z).reshape(1, *z.shape), kv).reshape(z.shape)

    def __call__(self, z: Tensor, f_vid: Tensor) -> tuple[Tensor, Tensor]:
        g = ops.sigmoid(self.gate(z))
        return z + g * self.update(z, f_vid), g


class ResidualProjection(Module):
    """Map the ``(M, D)`` completion state to a ``(V, T, D)`` latent residual.

    Queries are a learned per-(view, token) grid plus a projection of the
    scaffold token at that position; keys and values are the completion
    state. The output projection starts at zero, so the residual is exactly
    zero at initialization.
    """

    def __init__(self, name: str, cfg: NetConfig, rng):
        super().__init__(name)
        self.cfg = cfg
        self.queries = self.param("queries", rng.normal(0.0, 0.02, (cfg.max_views, cfg.tokens, cfg.dim)))
        self.ln_geo = self.child(LayerNorm(f"{name}.ln_geo", cfg.dim))
        self.geo = self.child(Linear(f"{name}.geo", cfg.dim, cfg.dim, rng))
        self.ln_kv = self.child(LayerNorm(f"{name}.ln_kv", cfg.dim))
        self.attn = self.child(Attention(f"{name}.attn", cfg.dim, cfg.heads, rng, out_std=0.0))

    def __call__(self, state: Tensor, z_geo: TokenField) -> TokenField:
        V, T, D = z_geo.shape
        q = self.queries[:V] + self.geo(self.ln_geo(z_geo.tokens))
        kv = self.ln_kv(state).reshape(1, *state.shape)
        delta = self.attn(q.reshape(1, V * T, D), kv).reshape(V, T, D)
        return TokenField(delta, z_geo.layer)


@dataclass
class CompletionOutput:
    delta: TokenField
    gates: list[Tensor]
    state: Tensor


class CompletionBranch(Module):
    def __init__(self, cfg: NetConfig, rng: np.random.Generator, name: str = "completion"):
        super().__init__(name)
        self.cfg = cfg
        self.tokens = self.param("tokens", rng.normal(0.0, 1.0, (cfg.n_completion, cfg.dim)))
        self.project_prior = self.child(Linear(f"{name}.p_vid", cfg.prior_dim, cfg.dim, rng))
        self.scaffold = [self.child(ScaffoldCrossAttention(f"{name}.scaffold{l}", cfg, rng))
                         for l in cfg.inject_layers]
        self.prior = [self.child(GatedPriorAttention(f"{name}.prior{l}", cfg, rng))
                      for l in cfg.inject_layers]
        self.residual = self.child(ResidualProjection(f"{name}.p_delta", cfg, rng))

    def __call__(self, fields: dict[int, TokenField], z_geo: TokenField, prior_features) -> CompletionOutput:
        f_vid = self.project_prior(as_tensor(prior_features))
        z = self.tokens
        gates = []
        for l, scaffold, prior in zip(self.cfg.inject_layers, self.scaffold, self.prior):
            z = scaffold(z, fields[l])
            z, g = prior(z, f_vid)
            gates.append(g)
        return CompletionOutput(self.residual(z, z_geo), gates, z)


def compose_latent(z_geo: TokenField, delta: TokenField) -> TokenField:
    """``Z_final = Z_geo + dZ``."""
    if z_geo.shape != delta.shape:
        raise ValueError(f"latent shapes differ: {z_geo.shape} vs {delta.shape}")
    return TokenField(z_geo.tokens + delta.tokens, z_geo.layer)
