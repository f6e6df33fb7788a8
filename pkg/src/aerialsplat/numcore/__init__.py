"""Minimal float64 tensor engine with reverse-mode differentiation."""
from . import ops
from .gradcheck import NonFiniteError, grad_check
from .ops import REGISTRY
from .serialize import CheckpointFormatError, load_arrays, load_parameters, save_arrays, save_parameters
from .tensor import (Parameter, ShapeError, Tensor, as_tensor, backward, make_node, no_grad, sg,
                     stop_gradient, zero_grads)

__all__ = [
    "CheckpointFormatError", "NonFiniteError", "Parameter", "REGISTRY", "ShapeError", "Tensor",
    "as_tensor", "backward", "grad_check", "load_arrays", "load_parameters", "make_node",
    "no_grad", "ops", "save_arrays", "save_parameters", "sg", "stop_gradient", "zero_grads",
]
