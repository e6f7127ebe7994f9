from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        if t.shape != p.shape:
            raise ValueError("prediction and label shapes differ")
        return cls(int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(t & ~p)), int(np.sum(~t & ~p)))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def accuracy_percent(self) -> float:
        return round(100.0 * self.accuracy, 2)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def evaluate(model, X, y) -> ConfusionMatrix:
    """Confusion matrix of ``model.predict(X)`` against ``y``."""
    if len(y) == 0:
        raise ValueError("evaluation set is empty")
    return ConfusionMatrix.from_predictions(y, model.predict(X))


def report_entry(name: str, cm: ConfusionMatrix, seed: int) -> dict:
    return {
        "model": name,
        "seed": seed,
        "confusion_matrix": cm.as_dict(),
        "accuracy": cm.accuracy_percent,
        "precision": round(cm.precision, 6),
        "recall": round(cm.recall, 6),
        "f1": round(cm.f1, 6),
    }


def write_confusion_csv(entries, path) -> None:
    """One row per model: tp, fp, fn, tn and accuracy, for external plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "tp", "fp", "fn", "tn", "accuracy"])
        for e in entries:
            cm = e["confusion_matrix"]
            w.writerow([e["model"], cm["tp"], cm["fp"], cm["fn"], cm["tn"], e["accuracy"]])
