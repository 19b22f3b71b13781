"""Datasets, corruptions and continual-learning stream construction."""

from .datasets import (
    Dataset,
    DatasetFormatError,
    load_cifar100_binary,
    load_dataset,
    make_synthetic_dataset,
    make_synthetic_splits,
    save_dataset,
    split_per_class,
)
from .stream import Experience, Stream, make_noisy_stream, make_split_stream, make_two_experience_stream
from .transforms import adjust_contrast, gaussian_blur, gaussian_kernel, grayscale, solarize

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "Experience",
    "Stream",
    "adjust_contrast",
    "gaussian_blur",
    "gaussian_kernel",
    "grayscale",
    "load_cifar100_binary",
    "load_dataset",
    "make_noisy_stream",
    "make_split_stream",
    "make_synthetic_dataset",
    "make_synthetic_splits",
    "make_two_experience_stream",
    "save_dataset",
    "solarize",
    "split_per_class",
]
