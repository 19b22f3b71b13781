"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, grad


def numerical_grad(f: Callable[[Sequence[Tensor]], Tensor], params: Sequence[Tensor], eps: float) -> list[np.ndarray]:
    out = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(params).data)
            flat[i] = orig - eps
            fm = float(f(params).data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite objective while perturbing coordinate {i}")
            gflat[i] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def finite_diff_check(f: Callable[[Sequence[Tensor]], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The relative error of a coordinate is |a - n| / max(|a|, |n|, 1e-8).
    Parameters are perturbed in place and restored afterwards.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = list(params)
    value = f(params)
    if not np.isfinite(value.data).all():
        raise FloatingPointError("objective is not finite at the base point")
    analytic = [g.data for g in grad(value, params, allow_unused=True)]
    numeric = numerical_grad(f, params, eps)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float((np.abs(a - n) / denom).max(initial=0.0)))
    return worst
