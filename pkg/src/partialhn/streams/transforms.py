"""Deterministic image corruptions for CHW or NCHW float images in [0, 1]."""

from __future__ import annotations

import numpy as np

from ..numerics import ContractError

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def solarize(img: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    img = np.asarray(img)
    return np.where(img >= threshold, 1.0 - img, img).astype(img.dtype)


def gaussian_kernel(sigma: float, kernel_size: int) -> np.ndarray:
    if sigma <= 0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ContractError(f"kernel_size must be a positive odd integer, got {kernel_size}")
    x = np.arange(kernel_size) - (kernel_size - 1) / 2.0
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _blur_axis(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0)] * img.ndim
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="reflect")
    out = np.zeros_like(img, dtype=np.float64)
    n = img.shape[axis]
    for i, w in enumerate(kernel):
        out += w * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(img: np.ndarray, sigma: float = 1.0, kernel_size: int = 5) -> np.ndarray:
    img = np.asarray(img)
    k = gaussian_kernel(sigma, kernel_size)
    out = _blur_axis(_blur_axis(img, k, img.ndim - 2), k, img.ndim - 1)
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


def _gray(img: np.ndarray) -> np.ndarray:
    return np.tensordot(GRAY_WEIGHTS, np.moveaxis(img, -3, 0), axes=1)


def grayscale(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    g = _gray(img.astype(np.float64))
    return np.repeat(np.expand_dims(g, -3), img.shape[-3], axis=-3).astype(img.dtype)


def adjust_contrast(img: np.ndarray, factor: float = 0.4) -> np.ndarray:
    img = np.asarray(img)
    mean = _gray(img.astype(np.float64)).mean(axis=(-2, -1), keepdims=True)
    mean = np.expand_dims(mean, -3)
    return np.clip(mean + factor * (img - mean), 0.0, 1.0).astype(img.dtype)


def contrast_blur_gray(img: np.ndarray, factor: float = 0.4, sigma: float = 1.0, kernel_size: int = 5) -> np.ndarray:
    return grayscale(gaussian_blur(adjust_contrast(img, factor), sigma, kernel_size))


TRANSFORMS = {
    "none": lambda img: img,
    "solarize": solarize,
    "gaussian_blur": gaussian_blur,
    "contrast_blur_grayscale": contrast_blur_gray,
}
