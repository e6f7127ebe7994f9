"""Gaussian naive Bayes for the binary benign/malicious task."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DatasetError

VAR_SMOOTHING = 1e-9


@dataclass
class GaussianNB:
    priors: np.ndarray  # (2,)
    means: np.ndarray  # (2, d)
    variances: np.ndarray  # (2, d)
    epsilon: float

    def log_posterior(self, X) -> np.ndarray:
        """Unnormalized log posteriors, shape ``(samples, 2)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty((len(X), 2))
        for k in range(2):
            var = self.variances[k]
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * var)) - 0.5 * np.sum((X - self.means[k]) ** 2 / var, axis=1)
            out[:, k] = np.log(self.priors[k]) + ll
        return out

    def predict(self, X) -> np.ndarray:
        lp = self.log_posterior(X)
        # ties go to benign
        return (lp[:, 1] > lp[:, 0]).astype(np.int64)

    def to_json(self) -> dict:
        return {"priors": self.priors.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist(), "epsilon": self.epsilon}

    @classmethod
    def from_json(cls, d: dict) -> "GaussianNB":
        return cls(np.asarray(d["priors"]), np.asarray(d["means"]),
                   np.asarray(d["variances"]), float(d["epsilon"]))


def nb_fit(X, y, var_smoothing: float = VAR_SMOOTHING) -> GaussianNB:
    """Per-class priors, means and variances.

    Every variance is raised by ``var_smoothing`` times the largest feature
    variance (never below ``var_smoothing``), so constant features cannot
    produce a zero variance.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if set(np.unique(y)) != {0, 1}:
        raise DatasetError("naive Bayes needs both classes in the training data")
    eps = var_smoothing * max(float(np.var(X, axis=0).max()), 1.0)
    priors = np.array([np.mean(y == k) for k in (0, 1)])
    means = np.stack([X[y == k].mean(axis=0) for k in (0, 1)])
    variances = np.stack([X[y == k].var(axis=0) for k in (0, 1)]) + eps
    return GaussianNB(priors, means, variances, eps)


def nb_predict(model: GaussianNB, x) -> np.ndarray:
    return model.predict(x)
