"""AdamW with global-norm clipping."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..numcore import Parameter

log = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """First/second moments keyed by parameter name plus the number of applied steps."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    skipped: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Parameter]) -> "OptimizerState":
        return cls({p.name: np.zeros_like(p.data) for p in params}, {p.name: np.zeros_like(p.data) for p in params})

    def check(self, params: list[Parameter]) -> None:
        for p in params:
            if p.name not in self.m or self.m[p.name].shape != p.data.shape or self.v[p.name].shape != p.data.shape:
                raise ValueError(f"optimizer moments do not match parameter {p.name!r}")


def global_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def adamw_step(params: list[Parameter], state: OptimizerState, lr: float, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.01,
               clip_norm: float | None = 1.0, grads: list[np.ndarray] | None = None) -> bool:
    """One decoupled-decay Adam update in place. Returns False when skipped.

    Gradients (``p.grad`` unless ``grads`` is given) are clipped to global
    norm ``clip_norm`` first. Decay applies only to parameters flagged
    ``decay`` (weight matrices). A non-finite gradient skips the update and
    records the step in ``state.skipped``.
    """
    grads = [p.grad for p in params] if grads is None else list(grads)
    for p, g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {p.name!r} {p.data.shape}")
    norm = global_norm(grads)
    if not np.isfinite(norm):
        state.skipped.append(state.step)
        log.warning("non-finite gradient at optimizer step %d, update skipped", state.step)
        return False
    scale = clip_norm / norm if clip_norm is not None and norm > clip_norm else 1.0
    state.step += 1
    t = state.step
    c1, c2 = 1.0 - beta1 ** t, 1.0 - beta2 ** t
    for p, g in zip(params, grads):
        g = g * scale
        m = state.m[p.name] = beta1 * state.m[p.name] + (1.0 - beta1) * g
        v = state.v[p.name] = beta2 * state.v[p.name] + (1.0 - beta2) * g * g
        data = p.data
        if p.decay and weight_decay:
            data = data - lr * weight_decay * data
        p.data = data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return True
