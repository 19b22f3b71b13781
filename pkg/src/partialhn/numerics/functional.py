"""Differentiable primitives.

Each primitive computes its forward value with numpy and records a backward
rule mapping the output gradient to one gradient per parent.
"""

from __future__ import annotations

import numpy as np

from .tensor import ContractError, Tensor, as_tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _lift(a, b):
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        return as_tensor(a, dtype=b.dtype), b
    a = as_tensor(a)
    return a, as_tensor(b, dtype=a.dtype)


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a, b)
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add"
    )


def sub(a, b) -> Tensor:
    a, b = _lift(a, b)
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub"
    )


def mul(a, b) -> Tensor:
    a, b = _lift(a, b)
    ad, bd = a.data, b.data
    return Tensor._from_op(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
        "mul",
    )


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return Tensor._from_op(
        ad**exponent, (a,), lambda g: (g * exponent * ad ** (exponent - 1),), "pow"
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._from_op(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


# -- reductions and shape ops ----------------------------------------------------

def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    shape = x.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._from_op(np.asarray(x.data.sum(axis=axis)), (x,), backward, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return Tensor._from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def flatten(x: Tensor) -> Tensor:
    """Collapse every axis after the first."""
    return reshape(x, (x.shape[0], -1))


def transpose(x: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)
    return Tensor._from_op(
        np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose"
    )


def take(x: Tensor, start: int, stop: int) -> Tensor:
    """x[start:stop] along the first axis."""
    shape, dtype = x.shape, x.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        full[start:stop] = g
        return (full,)

    return Tensor._from_op(x.data[start:stop].copy(), (x,), backward, "take")


def broadcast_to(x: Tensor, shape) -> Tensor:
    old = x.shape
    return Tensor._from_op(
        np.broadcast_to(x.data, shape).copy(), (x,), lambda g: (_unbroadcast(g, old),), "broadcast"
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor._from_op(
        np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat"
    )


# -- linear algebra --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _lift(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul shapes {a.shape} and {b.shape} do not agree")
    ad, bd = a.data, b.data
    return Tensor._from_op(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """y = x W^T + b with W of shape (out, in)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ContractError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is None:
        return Tensor._from_op(out, (x, weight), lambda g: (g @ wd, g.T @ xd), "linear")
    if bias.shape != (weight.shape[0],):
        raise ContractError(f"linear: bias {bias.shape} does not match out features {weight.shape[0]}")
    return Tensor._from_op(
        out + bias.data,
        (x, weight, bias),
        lambda g: (g @ wd, g.T @ xd, g.sum(axis=0)),
        "linear",
    )


# -- convolution and pooling -----------------------------------------------------

def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((c, k, k, n, ho, wo), dtype=xp.dtype)
    xt = xp.transpose(1, 0, 2, 3)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xt[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * k * k, n * ho * wo)


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation of an NCHW input with an (out, in, k, k) kernel."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ContractError(f"conv2d expects 4D input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    o, c2, k, k2 = kernel.shape
    if c != c2:
        raise ContractError(f"conv2d channel mismatch: input has {c} channels, kernel expects {c2}")
    if k != k2 or k % 2 == 0:
        raise ContractError(f"conv2d kernel must be square with odd size, got {k}x{k2}")
    if stride < 1 or padding < 0:
        raise ContractError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ContractError(f"conv2d input {h}x{w} too small for kernel {k} with padding {padding}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, k, stride, ho, wo)
    wmat = kernel.data.reshape(o, -1)
    out = (wmat @ cols).reshape(o, n, ho, wo).transpose(1, 0, 2, 3)

    def backward(g):
        gmat = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gk = (gmat @ cols.T).reshape(kernel.shape)
        gcols = (wmat.T @ gmat).reshape(c, k, k, n, ho, wo)
        gxp = np.zeros((c, n) + xp.shape[2:], dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, i, j]
        gxp = gxp.transpose(1, 0, 2, 3)
        if padding:
            gxp = gxp[:, :, padding:-padding, padding:-padding]
        return gxp, gk

    return Tensor._from_op(np.ascontiguousarray(out), (x, kernel), backward, "conv2d")


def avg_pool2d(x: Tensor, size: int) -> Tensor:
    """Non-overlapping average pooling with a square window."""
    n, c, h, w = x.shape
    if h % size or w % size:
        raise ContractError(f"avg_pool2d window {size} does not tile {h}x{w}")
    ho, wo = h // size, w // size
    out = x.data.reshape(n, c, ho, size, wo, size).mean(axis=(3, 5))

    def backward(g):
        g = np.repeat(np.repeat(g, size, axis=2), size, axis=3)
        return (g / (size * size),)

    return Tensor._from_op(out, (x,), backward, "avg_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """Average over the spatial axes, returning (N, C)."""
    n, c, h, w = x.shape
    return Tensor._from_op(
        x.data.mean(axis=(2, 3)),
        (x,),
        lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),),
        "global_avg_pool",
    )


# -- normalisation -----------------------------------------------------------------

def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: dict | None = None,
    train: bool = True,
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
) -> Tensor:
    """Per-channel batch normalisation of an NCHW tensor.

    ``running`` holds ``mean`` and ``var`` arrays of shape (C,). In train mode
    they are updated in place with the unbiased batch variance; in eval mode
    they are used for normalisation.
    """
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ContractError(f"batch_norm: gamma {gamma.shape}/beta {beta.shape} do not match {c} channels")
    xd = x.data
    gd = gamma.data
    if train:
        m = n * h * w
        if m < 2:
            raise ContractError("batch_norm in train mode needs at least two values per channel")
        mu = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        if running is not None:
            running["mean"] = (1 - momentum) * running["mean"] + momentum * mu
            running["var"] = (1 - momentum) * running["var"] + momentum * var * (m / (m - 1))
    else:
        if running is None:
            raise ContractError("batch_norm in eval mode needs running statistics")
        mu = running["mean"].astype(xd.dtype)
        var = running["var"].astype(xd.dtype)
    inv = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
    xhat = (xd - mu[None, :, None, None]) * inv[None, :, None, None]
    out = xhat * gd[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g):
        gbeta = g.sum(axis=(0, 2, 3))
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gxhat = g * gd[None, :, None, None]
        if train:
            m = n * h * w
            gx = (inv[None, :, None, None] / m) * (
                m * gxhat
                - gxhat.sum(axis=(0, 2, 3))[None, :, None, None]
                - xhat * (gxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
            )
        else:
            gx = gxhat * inv[None, :, None, None]
        return gx, ggamma, gbeta

    return Tensor._from_op(out, (x, gamma, beta), backward, "batch_norm")


# -- losses ---------------------------------------------------------------------------

def log_softmax(logits: Tensor) -> Tensor:
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return Tensor._from_op(
        out, (logits,), lambda g: (g - p * g.sum(axis=1, keepdims=True),), "log_softmax"
    )


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ContractError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ContractError(f"cross_entropy: labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = (lse - z[rows, labels]).mean()

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return Tensor._from_op(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "cross_entropy")


def squared_distance(a: Tensor, b) -> Tensor:
    """Sum of squared elementwise differences."""
    d = sub(a, b)
    return sum(mul(d, d))
