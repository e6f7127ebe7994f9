"""Independent reference implementations used as test oracles."""

import math
import statistics
from fractions import Fraction

import numpy as np

from coaplab.classifiers.lstm import loss_and_grads


def naive_checksum(data: bytes) -> int:
    """Textbook 16-bit ones'-complement sum with end-around carry, bit by bit."""
    if len(data) % 2:
        data += b"\0"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) | data[i + 1]
        while total > 0xFFFF:
            total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def brute_force_nb(X, y, x, eps_factor=1e-9):
    """Independent Gaussian naive Bayes in plain Python floats."""
    cols = list(zip(*X))
    eps = eps_factor * max(max(statistics.pvariance(c) for c in cols), 1.0)
    scores = []
    for k in (0, 1):
        rows = [r for r, lab in zip(X, y) if lab == k]
        s = math.log(len(rows) / len(X))
        for j in range(len(x)):
            vals = [r[j] for r in rows]
            mu = statistics.fmean(vals)
            var = statistics.pvariance(vals, mu) + eps
            s += -0.5 * math.log(2 * math.pi * var) - (x[j] - mu) ** 2 / (2 * var)
        scores.append(s)
    return int(scores[1] > scores[0]), scores


def exhaustive_root_split(X, y):
    """Exact weighted-Gini search; ties to lower feature then lower threshold."""
    n = len(y)
    best = None
    for f in range(X.shape[1]):
        vals = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2
            left = [int(v) for v, x in zip(y, X[:, f]) if x <= thr]
            right = [int(v) for v, x in zip(y, X[:, f]) if x > thr]
            g = Fraction(0)
            for side in (left, right):
                p = Fraction(sum(side), len(side))
                g += Fraction(len(side), n) * (1 - p * p - (1 - p) * (1 - p))
            if best is None or g < best[0]:
                best = (g, f, thr)
    return best


def finite_difference_check(model, X, y, pos_weight=1.0, eps=1e-5):
    _, grads = loss_and_grads(model, X, y, pos_weight)
    worst = 0.0
    for name, value in model.params().items():
        analytic = np.atleast_1d(grads[name])
        for idx in np.ndindex(np.atleast_1d(value).shape):
            def loss_at(delta):
                m = model.copy()
                if name == "c":
                    m.c += delta
                else:
                    getattr(m, name)[idx] += delta
                return loss_and_grads(m, X, y, pos_weight)[0]
            numeric = (loss_at(eps) - loss_at(-eps)) / (2 * eps)
            a = analytic[idx]
            denom = max(abs(a), abs(numeric), 1e-7)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
