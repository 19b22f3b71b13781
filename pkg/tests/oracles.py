"""Independent reference implementations used by the tests.

Nothing here imports the code under test beyond plain data containers.
"""

import math
from fractions import Fraction

import mpmath
import numpy as np


def naive_conv2d(x, w, stride=1, padding=0):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=np.float64)
    xp[:, :, padding : padding + h, padding : padding + wd] = x
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for b in range(n):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ic in range(c):
                        for di in range(k):
                            for dj in range(k):
                                acc += xp[b, ic, i * stride + di, j * stride + dj] * w[oc, ic, di, dj]
                    out[b, oc, i, j] = acc
    return out


def mp_cross_entropy(logits, labels):
    mpmath.mp.dps = 40
    total = mpmath.mpf(0)
    for row, y in zip(logits, labels):
        lse = mpmath.log(mpmath.fsum(mpmath.e ** mpmath.mpf(float(v)) for v in row))
        total += lse - mpmath.mpf(float(row[y]))
    return float(total / len(labels))


# The metric oracles work in exact rationals and round once at the end.


def brute_aca(R, t):
    total = Fraction(0)
    for i in range(t):
        total += Fraction(float(R[t - 1][i]))
    return float(total / t)


def brute_forgetting(R, t):
    total = Fraction(0)
    for i in range(t - 1):
        best = -math.inf
        for j in range(i, t):
            best = max(best, float(R[j][i]))
        total += Fraction(best) - Fraction(float(R[t - 1][i]))
    return float(total / (t - 1))


def brute_learning_accuracy(R, t):
    total = Fraction(0)
    for i in range(t):
        total += Fraction(float(R[i][i]))
    return float(total / t)
