"""Network hyper-parameters."""
from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass
class NetConfig:
    """Sizes of the toy reconstruction network.

    ``inject_layers`` are 1-based encoder layers whose outputs feed the
    completion branch. ``depth_range`` bounds predicted Gaussian depths
    (camera z); its midpoint is the depth decoded from a zero head output.
    """

    patch: int = 8
    dim: int = 64
    prior_dim: int = 32
    n_completion: int = 16
    heads: int = 4
    layers: int = 8
    inject_layers: tuple[int, ...] = (2, 3, 4, 8)
    per_token: int = 1
    image_size: tuple[int, int] = (64, 64)  # (height, width)
    max_views: int = 16
    mlp_ratio: int = 2
    depth_range: tuple[float, float] = (0.5, 6.0)
    scale_fraction: float = 0.5
    opacity_bias: float = 2.0
    head_std: float = 0.02
    offset_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.inject_layers = tuple(int(i) for i in self.inject_layers)
        self.image_size = tuple(int(s) for s in self.image_size)
        self.depth_range = tuple(float(d) for d in self.depth_range)
        if not self.inject_layers:
            raise ValueError("inject_layers must be non-empty")
        if min(self.inject_layers) < 1 or max(self.inject_layers) > self.layers:
            raise ValueError("inject_layers must lie in 1..layers")
        if self.dim % self.heads or self.dim % 4:
            raise ValueError("dim must be divisible by heads and by 4")
        h, w = self.image_size
        if h % self.patch or w % self.patch:
            raise ValueError("image_size must be divisible by patch")
        if not 0 < self.depth_range[0] < self.depth_range[1]:
            raise ValueError("depth_range must be positive and ordered")
        for name in ("patch", "dim", "prior_dim", "n_completion", "heads", "layers", "per_token", "max_views"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def grid(self) -> tuple[int, int]:
        return self.image_size[0] // self.patch, self.image_size[1] // self.patch

    @property
    def tokens(self) -> int:
        r, c = self.grid
        return r * c

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("inject_layers", "image_size", "depth_range"):
            d[k] = list(d[k])
        return d
