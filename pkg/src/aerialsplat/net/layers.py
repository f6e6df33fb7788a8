"""Small building blocks: parameter registry, linear/norm layers, attention."""
from __future__ import annotations

import numpy as np

from ..numcore import Parameter, Tensor, ops


class Module:
    """Holds named Parameters; sub-modules are discovered via ``children``."""

    def __init__(self, name: str):
        self.name = name
        self._params: list[Parameter] = []
        self._children: list[Module] = []

    def param(self, suffix: str, value, decay: bool = False) -> Parameter:
        p = Parameter(value, name=f"{self.name}.{suffix}", decay=decay)
        self._params.append(p)
        return p

    def child(self, module: "Module") -> "Module":
        self._children.append(module)
        return module

    def parameters(self) -> list[Parameter]:
        out = list(self._params)
        for c in self._children:
            out.extend(c.parameters())
        return out


class Linear(Module):
    def __init__(self, name: str, d_in: int, d_out: int, rng: np.random.Generator, std: float | None = None,
                 bias: bool = True):
        super().__init__(name)
        std = 1.0 / np.sqrt(d_in) if std is None else std
        self.w = self.param("w", rng.normal(0.0, std, (d_in, d_out)) if std > 0 else np.zeros((d_in, d_out)),
                            decay=True)
        self.b = self.param("b", np.zeros(d_out)) if bias else None

    def __call__(self, x) -> Tensor:
        y = x @ self.w
        return y + self.b if self.b is not None else y


class LayerNorm(Module):
    def __init__(self, name: str, d: int):
        super().__init__(name)
        self.gain = self.param("gain", np.ones(d))
        self.bias = self.param("bias", np.zeros(d))

    def __call__(self, x) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias)


def split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, d = x.shape
    return ops.transpose(x.reshape(b, n, heads, d // heads), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    b, h, n, dh = x.shape
    return ops.transpose(x, (0, 2, 1, 3)).reshape(b, n, h * dh)


class Attention(Module):
    """Multi-head attention ``(B, Nq, D) x (B, Nk, D) -> (B, Nq, D)``.

    ``out_std=0`` zero-initializes the output projection, which makes the
    residual branch an exact identity at initialization.
    """

    def __init__(self, name: str, d: int, heads: int, rng: np.random.Generator, out_std: float | None = None):
        super().__init__(name)
        if d % heads:
            raise ValueError(f"dim {d} not divisible by {heads} heads")
        self.heads = heads
        self.q = self.child(Linear(f"{name}.q", d, d, rng))
        self.k = self.child(Linear(f"{name}.k", d, d, rng))
        self.v = self.child(Linear(f"{name}.v", d, d, rng))
        self.o = self.child(Linear(f"{name}.o", d, d, rng, std=out_std))

    def weights(self, xq: Tensor, xkv: Tensor) -> Tensor:
        q = split_heads(self.q(xq), self.heads)
        k = split_heads(self.k(xkv), self.heads)
        dh = q.shape[-1]
        return ops.softmax((q @ ops.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh)), axis=-1)

    def __call__(self, xq: Tensor, xkv: Tensor) -> Tensor:
        w = self.weights(xq, xkv)
        v = split_heads(self.v(xkv), self.heads)
        return self.o(merge_heads(w @ v))


class MLP(Module):
    def __init__(self, name: str, d: int, hidden: int, rng: np.random.Generator, out_std: float | None = None):
        super().__init__(name)
        self.fc1 = self.child(Linear(f"{name}.fc1", d, hidden, rng))
        self.fc2 = self.child(Linear(f"{name}.fc2", hidden, d, rng, std=out_std))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


def sincos_2d(rows: int, cols: int, d: int) -> np.ndarray:
    """Fixed 2D sinusoidal encoding, half the channels per axis: ``(rows*cols, d)``."""
    if d % 4:
        raise ValueError("positional dim must be divisible by 4")
    q = d // 4
    freq = 1.0 / (100.0 ** (np.arange(q) / q))
    yy, xx = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    parts = []
    for coord in (xx.ravel(), yy.ravel()):
        ang = coord[:, None] * freq[None, :]
        parts += [np.sin(ang), np.cos(ang)]
    return np.concatenate(parts, axis=1)
