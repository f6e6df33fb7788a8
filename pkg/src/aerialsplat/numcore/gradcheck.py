"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, _sg_recording, _sg_replaying, backward, no_grad


class NonFiniteError(ArithmeticError):
    pass


def _scalarize(out: Tensor, weights: np.ndarray | None):
    from . import ops
    if out.size == 1:
        return ops.sum(out)
    return ops.sum(ops.mul(out, weights))


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               seed: int = 0, floor: float = 1e-8, return_details: bool = False, samples: int | None = None):
    """Max relative error between backprop and central differences.

    ``samples`` limits differencing to that many seeded random entries per
    input (all entries by default); ``return_details`` then reports only the
    sampled entries.

    ``f(*inputs)`` may return any shape; non-scalar outputs are contracted with
    fixed random weights. Values passed through ``stop_gradient`` are frozen at
    their unperturbed values while differencing, so the check measures exactly
    the gradient that backprop is supposed to deliver.
    """
    inputs = list(inputs)
    for t in inputs:
        t.data = np.array(t.data, dtype=np.float64, order="C")
        t.requires_grad = True
        t.grad = None if not hasattr(t, "name") else np.zeros_like(t.data)

    frozen: list = []
    with _sg_recording(frozen):
        out = f(*inputs)
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError("grad_check: f produced non-finite output")
    weights = None
    if out.size != 1:
        weights = np.random.default_rng(seed).uniform(0.5, 1.5, size=out.shape)
    loss = _scalarize(out, weights)
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else np.array(t.grad) for t in inputs]

    def evaluate() -> float:
        with no_grad(), _sg_replaying(frozen):
            val = f(*inputs)
        if not np.all(np.isfinite(val.data)):
            raise NonFiniteError("grad_check: f produced non-finite output")
        return float(_scalarize(val, weights).data)

    worst = 0.0
    details = []
    pick = np.random.default_rng([seed, 1])
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        entries = np.arange(flat.size)
        if samples is not None and samples < flat.size:
            entries = np.sort(pick.choice(flat.size, samples, replace=False))
        numeric = np.zeros(len(entries))
        for j, i in enumerate(entries):
            orig = flat[i]
            flat[i] = orig + eps
            fp = evaluate()
            flat[i] = orig - eps
            fm = evaluate()
            flat[i] = orig
            numeric[j] = (fp - fm) / (2.0 * eps)
        af = a.reshape(-1)[entries]
        denom = np.maximum(np.maximum(np.abs(af), np.abs(numeric)), floor)
        rel = np.abs(af - numeric) / denom
        if rel.size:
            worst = max(worst, float(rel.max()))
        details.append((af.copy(), numeric))
    if return_details:
        return worst, details
    return worst
