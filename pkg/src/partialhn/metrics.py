"""Accuracy-matrix bookkeeping and memory accounting.

``R[t-1][i-1]`` holds the test accuracy on experience ``i`` after training
through experience ``t``; entries with ``i > t`` are undefined (NaN). All
public functions take ``t`` as the 1-based number of experiences seen.

Averages are computed in exact rational arithmetic and rounded once, so a
metric never depends on summation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .numerics import ContractError

BYTES_PER_VALUE = 4
MIB = 2**20


class AccuracyMatrix:
    def __init__(self, n_experiences: int):
        self.R = np.full((n_experiences, n_experiences), np.nan)

    @classmethod
    def from_array(cls, R) -> "AccuracyMatrix":
        R = np.asarray(R, dtype=float)
        m = cls(R.shape[0])
        m.R[:] = R
        return m

    @property
    def size(self) -> int:
        return self.R.shape[0]

    def set_row(self, t: int, accs) -> None:
        accs = list(accs)
        if len(accs) != t:
            raise ContractError(f"row {t} needs {t} accuracies, got {len(accs)}")
        if any(not 0.0 <= a <= 1.0 for a in accs):
            raise ContractError("accuracies must lie in [0, 1]")
        self.R[t - 1, :t] = accs

    def rows_complete(self) -> int:
        done = 0
        for t in range(1, self.size + 1):
            if np.isnan(self.R[t - 1, :t]).any():
                break
            done = t
        return done

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["after_exp"] + [f"acc_exp_{i + 1}" for i in range(self.size)])
            for t in range(self.size):
                w.writerow([t + 1] + ["" if np.isnan(v) else f"{v:.6f}" for v in self.R[t]])
        return path

    @classmethod
    def from_csv(cls, path) -> "AccuracyMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        n = len(rows[0]) - 1
        m = cls(n)
        for row in rows[1:]:
            t = int(row[0])
            m.R[t - 1] = [float(v) if v != "" else np.nan for v in row[1:]]
        return m


def _rows(R):
    return R.R if isinstance(R, AccuracyMatrix) else np.asarray(R, dtype=float)


def _check_row(R, t):
    if t < 1 or t > R.shape[0]:
        raise ContractError(f"t={t} outside 1..{R.shape[0]}")
    if np.isnan(R[t - 1, :t]).any():
        raise ContractError(f"row {t} of the accuracy matrix is incomplete")


def _exact_mean(terms) -> float:
    terms = list(terms)
    return float(sum(terms, Fraction(0)) / len(terms))


def aca(R, t: int) -> float:
    """Average classification accuracy over the experiences seen so far."""
    R = _rows(R)
    _check_row(R, t)
    return _exact_mean(Fraction(v) for v in R[t - 1, :t])


def forgetting(R, t: int) -> float:
    """Mean over earlier experiences of (best accuracy so far - accuracy now)."""
    R = _rows(R)
    if t < 2:
        raise ContractError("forgetting needs at least two experiences")
    for s in range(1, t + 1):
        _check_row(R, s)
    return _exact_mean(Fraction(R[i:t, i].max()) - Fraction(R[t - 1, i]) for i in range(t - 1))


def learning_accuracy(R, t: int) -> float:
    """Mean accuracy on each experience right after it was learned."""
    R = _rows(R)
    for s in range(1, t + 1):
        _check_row(R, s)
    return _exact_mean(Fraction(R[i, i]) for i in range(t))


def memory_lr(latent_shape, buffer_size: int) -> int:
    """Bytes held by a latent-replay buffer of 32-bit exemplars."""
    if buffer_size <= 0 or any(s <= 0 for s in latent_shape):
        raise ContractError("sizes must be positive")
    return int(np.prod(latent_shape)) * int(buffer_size) * BYTES_PER_VALUE


def memory_hn(param_count: int) -> int:
    """Bytes of a stored hypernetwork copy at 32 bits per parameter."""
    if param_count <= 0:
        raise ContractError("param_count must be positive")
    return int(param_count) * BYTES_PER_VALUE


def mib(nbytes: int) -> float:
    return round(nbytes / MIB, 2)


def format_mib(nbytes: int) -> str:
    return f"{nbytes / MIB:.2f}"


@dataclass
class MemoryEntry:
    label: str
    bytes: int

    @property
    def mib(self) -> str:
        return format_mib(self.bytes)


def write_memory_csv(path, entries) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "bytes", "mib"])
        for e in entries:
            w.writerow([e.label, e.bytes, e.mib])
    return path
