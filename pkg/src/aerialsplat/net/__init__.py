"""Toy reconstruction network."""
from .completion import (CompletionBranch, CompletionOutput, GatedPriorAttention, ResidualProjection,
                         ScaffoldCrossAttention, compose_latent)
from .config import NetConfig
from .decoder import HEAD, GaussianDecoder, patch_centers, patch_colors
from .encoder import GeometryEncoder, TokenField, patchify
from .layers import MLP, Attention, LayerNorm, Linear, Module, sincos_2d
from .model import AerialSplatNet, Reconstruction
from .prior import PriorStub, extract_prior_features, pooled_statistics, pyramid_cells

__all__ = [
    "AerialSplatNet", "Attention", "CompletionBranch", "CompletionOutput", "GatedPriorAttention",
    "GaussianDecoder", "GeometryEncoder", "HEAD", "LayerNorm", "Linear", "MLP", "Module", "NetConfig",
    "PriorStub", "Reconstruction", "ResidualProjection", "ScaffoldCrossAttention", "TokenField",
    "compose_latent", "extract_prior_features", "patch_centers", "patch_colors", "patchify",
    "pooled_statistics", "pyramid_cells", "sincos_2d",
]
