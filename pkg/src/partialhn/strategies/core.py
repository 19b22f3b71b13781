"""Hypernetwork-agnostic pieces of the look-ahead update.

Everything here works on plain ``{name: Tensor}`` parameter mappings and
callables, so the same code drives the real strategy and the toy problems in
the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ..numerics import ContractError, Tensor, grad
from ..numerics import functional as F

LossFn = Callable[[Mapping[str, Tensor]], Tensor]


def regularizer(hn, snapshot, prev_task_ids, params=None) -> Tensor:
    """Sum over previous tasks of ||H*(j) - H(j)||² over the full weight set.

    ``hn`` needs only a ``flat_output(task_id, params=None)`` method and
    ``snapshot`` a ``params`` mapping. Gradients flow into the live (or given)
    parameters only.
    """
    prev = list(prev_task_ids)
    if not prev:
        raise ContractError("regularizer needs at least one previous task")
    if snapshot is None:
        raise ContractError("regularizer needs a snapshot of the hypernetwork")
    total = None
    for j in prev:
        target = hn.flat_output(j, snapshot.params).data
        term = F.squared_distance(hn.flat_output(j, params), target)
        total = term if total is None else F.add(total, term)
    return total


def output_distance(hn, targets: Mapping[int, np.ndarray], params=None) -> Tensor:
    """Same as :func:`regularizer` with the snapshot outputs precomputed."""
    total = None
    for j in sorted(targets):
        term = F.squared_distance(hn.flat_output(j, params), targets[j])
        total = term if total is None else F.add(total, term)
    if total is None:
        raise ContractError("no previous-task targets")
    return total


def cosine(a: list[np.ndarray], b: list[np.ndarray]) -> float:
    dot = sum(float(np.vdot(x.astype(np.float64), y.astype(np.float64))) for x, y in zip(a, b))
    na = np.sqrt(sum(float(np.vdot(x, x)) for x in a))
    nb = np.sqrt(sum(float(np.vdot(y, y)) for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(dot / (na * nb), -1.0, 1.0))


@dataclass
class LookaheadResult:
    combined: list[np.ndarray]
    g1: list[np.ndarray]
    g2: list[np.ndarray]
    ce: float
    reg: float
    cos: float


def lookahead_gradient(params: Mapping[str, Tensor], ce_fn: LossFn, reg_fn: LossFn, beta: float, lam: float) -> LookaheadResult:
    """First-order look-ahead gradient.

    g1 is the CE gradient at ψ; ψ' = ψ - beta·g1 is built from fresh tensors
    (ψ is left untouched); g2 is the gradient of the regulariser at ψ',
    treated as a gradient with respect to ψ. Returns (1-lam)·g1 + lam·g2.
    """
    names = list(params)
    live = [params[n] for n in names]
    ce = ce_fn(params)
    g1 = [g.data for g in grad(ce, live, allow_unused=True)]

    virtual = {n: Tensor(p.data - beta * g, requires_grad=True, name=n) for n, p, g in zip(names, live, g1)}
    reg = reg_fn(virtual)
    g2 = [g.data for g in grad(reg, [virtual[n] for n in names], allow_unused=True)]

    combined = [(1.0 - lam) * a + lam * b for a, b in zip(g1, g2)]
    return LookaheadResult(combined, g1, g2, float(ce.data), float(reg.data), cosine(g1, g2))


def regularized_gradient(params: Mapping[str, Tensor], ce_fn: LossFn, reg_fn: LossFn, lam: float) -> tuple[list[np.ndarray], float, float]:
    """Gradient of L_CE + lam·L_H at the live parameters (no look-ahead)."""
    live = list(params.values())
    ce = ce_fn(params)
    reg = reg_fn(params)
    total = F.add(ce, F.mul(reg, lam))
    gs = [g.data for g in grad(total, live, allow_unused=True)]
    return gs, float(ce.data), float(reg.data)
