"""Minimal numpy-backed reverse-mode differentiation."""

from . import functional
from .gradcheck import finite_diff_check, numerical_grad
from .optim import sgd_step
from .rng import Rng
from .tensor import DEFAULT_DTYPE, ContractError, Tape, Tensor, UnreachableParameterError, as_tensor, grad

__all__ = [
    "ContractError",
    "DEFAULT_DTYPE",
    "Rng",
    "Tape",
    "Tensor",
    "UnreachableParameterError",
    "as_tensor",
    "finite_diff_check",
    "functional",
    "grad",
    "numerical_grad",
    "sgd_step",
]
