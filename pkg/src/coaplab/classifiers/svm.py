"""Linear SVM trained with Pegasos-style stochastic subgradient steps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DivergenceError(ArithmeticError):
    pass


@dataclass
class LinearSVM:
    lam: float = 1e-4
    epochs: int = 20
    seed: int = 0
    project: bool = True
    w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    b: float = 0.0
    objective_history: list = field(default_factory=list)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.w + self.b

    def predict(self, X) -> np.ndarray:
        # sign(0) counts as benign
        return (self.decision_function(X) > 0).astype(np.int64)

    def objective(self, X, y) -> float:
        return svm_objective(self.w, self.b, X, y, self.lam)

    def fit(self, X, y) -> "LinearSVM":
        """Minimize ``lam/2 * |(w, b)|^2 + mean hinge`` with step ``1/(lam t)``.

        The bias is handled as the weight of a constant feature, so it is
        regularized together with ``w``.  The returned parameters are the
        average of all iterates; ``objective_history`` records the objective of
        that running average after each epoch.
        """
        X = np.asarray(X, dtype=np.float64)
        s = np.where(np.asarray(y) > 0, 1.0, -1.0)
        Xa = np.hstack([X, np.ones((len(X), 1))])
        rng = np.random.default_rng(self.seed)
        wa = np.zeros(Xa.shape[1])
        avg = np.zeros_like(wa)
        radius = 1.0 / np.sqrt(self.lam)
        t = 0
        self.objective_history = []
        for _ in range(self.epochs):
            for i in rng.permutation(len(Xa)):
                t += 1
                eta = 1.0 / (self.lam * t)
                margin = s[i] * (Xa[i] @ wa)
                wa *= 1.0 - eta * self.lam
                if margin < 1.0:
                    wa += eta * s[i] * Xa[i]
                if self.project:
                    norm = np.sqrt(wa @ wa)
                    if norm > radius:
                        wa *= radius / norm
                avg += (wa - avg) / t
            if not np.all(np.isfinite(avg)):
                raise DivergenceError("SVM parameters became non-finite")
            self.objective_history.append(svm_objective(avg[:-1], avg[-1], X, y, self.lam))
        self.w, self.b = avg[:-1].copy(), float(avg[-1])
        return self

    def to_json(self) -> dict:
        return {"lam": self.lam, "epochs": self.epochs, "seed": self.seed, "project": self.project,
                "w": self.w.tolist(), "b": self.b}

    @classmethod
    def from_json(cls, d: dict) -> "LinearSVM":
        d = dict(d)
        d["w"] = np.asarray(d["w"], dtype=np.float64)
        return cls(**d)


def svm_objective(w, b, X, y, lam) -> float:
    s = np.where(np.asarray(y) > 0, 1.0, -1.0)
    margins = s * (np.asarray(X, dtype=np.float64) @ w + b)
    return float(0.5 * lam * (w @ w + b * b) + np.mean(np.maximum(0.0, 1.0 - margins)))


def svm_fit(X, y, lam: float = 1e-4, epochs: int = 20, seed: int = 0) -> LinearSVM:
    return LinearSVM(lam, epochs, seed).fit(X, y)


def svm_predict(model: LinearSVM, x) -> np.ndarray:
    return model.predict(x)
