from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureDataset:
    """Window tensors with binary labels (0 benign, 1 malicious).

    ``sequences`` has shape ``(windows, n, d)``; flat models see each window
    as its row-major ``n*d`` vector.
    """

    sequences: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        seq = np.asarray(self.sequences, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if seq.ndim != 3:
            raise DatasetError(f"sequences must be 3-D, got shape {seq.shape}")
        if len(seq) != len(y):
            raise DatasetError("sequence and label counts differ")
        if not np.isin(y, (0, 1)).all():
            raise DatasetError("labels must be 0 or 1")
        object.__setattr__(self, "sequences", seq)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def X(self) -> np.ndarray:
        return self.sequences.reshape(len(self.y), -1)

    def subset(self, idx) -> "FeatureDataset":
        return FeatureDataset(self.sequences[idx], self.y[idx])

    def check_trainable(self) -> None:
        if len(np.unique(self.y)) < 2:
            raise DatasetError("training data must contain both classes")


def train_test_split(y, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified, seeded split returning sorted ``(train_idx, test_idx)``.

    Each class contributes ``round(test_fraction * count)`` samples to the test
    side, kept between 1 and ``count - 1``.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError("test_fraction must lie strictly between 0 and 1")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < 2:
            raise DatasetError(f"class {cls} has fewer than 2 samples")
        n_test = min(max(int(round(test_fraction * len(idx))), 1), len(idx) - 1)
        perm = rng.permutation(idx)
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
