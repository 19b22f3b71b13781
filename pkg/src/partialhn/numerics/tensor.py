"""Tensor values and the reverse-mode tape."""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ContractError(ValueError):
    """Raised when an operation's preconditions are violated."""


class UnreachableParameterError(ContractError):
    """A requested parameter does not appear on the tape of the loss."""


class Tensor:
    """n-dimensional array with an optional gradient record.

    ``data`` is a numpy array; ``shape`` mirrors it. Operations on tensors that
    require grad record their parents and a backward rule so that :func:`grad`
    can replay them in reverse.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, (np.ndarray, np.generic)) and data.dtype.kind == "f" else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    # -- construction helpers -------------------------------------------------
    @classmethod
    def _from_op(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.op = op
        live = any(p.requires_grad for p in parents)
        out.requires_grad = live
        out._parents = tuple(parents) if live else ()
        out._backward = backward if live else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}, op={self.op})"

    def backward(self) -> None:
        """Populate ``.grad`` on every leaf tensor that requires grad."""
        leaves = [n for n in Tape(self).nodes if n.requires_grad and n._backward is None]
        for leaf, g in zip(leaves, grad(self, leaves)):
            leaf.grad = g.data if leaf.grad is None else leaf.grad + g.data

    # -- operator sugar; definitions live in functional ----------------------
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import functional as F
        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F
        return F.matmul(self, other)

    def __pow__(self, exponent):
        from . import functional as F
        return F.power(self, exponent)

    def sum(self, axis=None):
        from . import functional as F
        return F.sum(self, axis=axis)

    def mean(self, axis=None):
        from . import functional as F
        return F.mean(self, axis=axis)

    def reshape(self, *shape):
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=dtype)


class Tape:
    """Topologically ordered record of the operations that produced ``root``.

    Every node appears after all of its parents, and each node appears once.
    """

    def __init__(self, root: Tensor):
        self.root = root
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.nodes = order

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, t: Tensor) -> bool:
        return any(n is t for n in self.nodes)


def grad(loss: Tensor, params: Iterable[Tensor], allow_unused: bool = False) -> list[Tensor]:
    """Return d(loss)/d(param) for each param without mutating anything.

    Raises :class:`UnreachableParameterError` if a param does not appear on the
    loss tape, unless ``allow_unused`` is set, in which case a zero gradient is
    returned for it.
    """
    params = list(params)
    if loss.data.size != 1:
        raise ContractError(f"grad needs a scalar loss, got shape {loss.shape}")
    tape = Tape(loss)
    on_tape = {id(n) for n in tape.nodes}
    for i, p in enumerate(params):
        if id(p) not in on_tape or not p.requires_grad:
            if not allow_unused:
                label = p.name or f"#{i}"
                raise UnreachableParameterError(f"parameter {label} {p.shape} is not on the tape of the loss")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    out = []
    for p in params:
        g = grads.get(id(p))
        if g is None:
            g = np.zeros_like(p.data)
        out.append(Tensor(np.asarray(g, dtype=p.dtype).reshape(p.shape)))
    return out
