from __future__ import annotations

from typing import Sequence

from .tensor import ContractError, Tensor


def sgd_step(params: Sequence[Tensor], grads: Sequence[Tensor], lr: float) -> None:
    """In-place p <- p - lr * g. Callers never pass frozen tensors."""
    if lr < 0:
        raise ContractError(f"learning rate must be non-negative, got {lr}")
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} params but {len(grads)} gradients")
    for p, g in zip(params, grads):
        gd = g.data if isinstance(g, Tensor) else g
        if p.shape != gd.shape:
            raise ContractError(f"sgd_step: param {p.name or ''} {p.shape} vs grad {gd.shape}")
        if lr:
            p.data -= (lr * gd).astype(p.dtype, copy=False)
