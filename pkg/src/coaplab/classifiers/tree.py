"""CART decision trees (Gini impurity) and bagged random forests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LEAF = -1


def split_scores(xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Score every split point of column-sorted data.

    ``xs`` and ``ys`` are ``(m, f)`` arrays with each column sorted by feature
    value.  Returns ``(score, threshold)`` of shape ``(m-1, f)`` where a split
    after row ``i`` sends rows ``0..i`` left.  ``score = sum over sides of
    (n_pos^2 + n_neg^2) / n_side``; maximizing it minimizes weighted Gini.
    Positions between equal values score ``-inf``.
    """
    m = xs.shape[0]
    pos_left = np.cumsum(ys, axis=0)[:-1].astype(np.float64)
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    n_right = m - n_left
    pos_total = float(pos_left[-1, 0] + ys[-1, 0]) if m > 1 else float(ys.sum())
    neg_left = n_left - pos_left
    pos_right = pos_total - pos_left
    neg_right = n_right - pos_right
    score = (pos_left ** 2 + neg_left ** 2) / n_left + (pos_right ** 2 + neg_right ** 2) / n_right
    score[xs[1:] == xs[:-1]] = -np.inf
    return score, (xs[1:] + xs[:-1]) / 2.0


def best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray):
    """Best ``(feature, threshold)`` over ``features`` or ``None`` if no split exists.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    features = np.sort(features)
    sub = X[:, features]
    order = np.argsort(sub, axis=0, kind="stable")
    cols = np.arange(sub.shape[1])
    xs = sub[order, cols]
    ys = y[order]
    score, thr = split_scores(xs, ys)
    best = score.max()
    if not np.isfinite(best):
        return None
    tol = 1e-12 * max(1, len(y))
    # feature-major, then increasing threshold
    flat = (score >= best - tol).T.ravel()
    k = int(np.argmax(flat))
    fi, row = divmod(k, score.shape[0])
    return int(features[fi]), float(thr[row, fi])


@dataclass
class DecisionTree:
    max_depth: int = 12
    min_samples_split: int = 2
    features_per_split: int | None = None
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    proba: list = field(default_factory=list)  # fraction malicious at the node

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def _new_node(self, y) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.proba.append(float(y.sum()) / len(y) if len(y) else 0.0)
        return len(self.feature) - 1

    def fit(self, X, y, rng: np.random.Generator | None = None) -> "DecisionTree":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            raise ValueError("cannot fit a tree on no samples")
        self.feature, self.threshold, self.left, self.right, self.proba = [], [], [], [], []
        d = X.shape[1]
        k = d if self.features_per_split is None else min(self.features_per_split, d)
        if k < d and rng is None:
            rng = np.random.default_rng(0)
        stack = [(np.arange(len(y)), 0, self._new_node(y))]
        while stack:
            idx, depth, node = stack.pop()
            ys = y[idx]
            if depth >= self.max_depth or len(idx) < self.min_samples_split or ys.min() == ys.max():
                continue
            feats = np.arange(d) if k == d else rng.choice(d, size=k, replace=False)
            found = best_split(X[idx], ys, feats)
            if found is None:
                continue
            f, t = found
            go_left = X[idx, f] <= t
            li, ri = idx[go_left], idx[~go_left]
            self.feature[node], self.threshold[node] = f, t
            self.left[node] = self._new_node(y[li])
            self.right[node] = self._new_node(y[ri])
            # push right first so the left subtree gets the lower node ids
            stack.append((ri, depth + 1, self.right[node]))
            stack.append((li, depth + 1, self.left[node]))
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        feature = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        active = feature[node] != LEAF
        while active.any():
            n = node[active]
            go_left = X[active, feature[n]] <= thr[n]
            node[active] = np.where(go_left, left[n], right[n])
            active = feature[node] != LEAF
        return np.asarray(self.proba)[node]

    def predict(self, X) -> np.ndarray:
        # a 50/50 leaf predicts benign
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def depth(self) -> int:
        def walk(n):
            return 0 if self.feature[n] == LEAF else 1 + max(walk(self.left[n]), walk(self.right[n]))
        return walk(0)

    def to_json(self) -> dict:
        return {"max_depth": self.max_depth, "min_samples_split": self.min_samples_split,
                "features_per_split": self.features_per_split, "feature": list(self.feature),
                "threshold": list(self.threshold), "left": list(self.left),
                "right": list(self.right), "proba": list(self.proba)}

    @classmethod
    def from_json(cls, d: dict) -> "DecisionTree":
        return cls(**d)


def tree_fit(X, y, max_depth: int = 12, min_samples_split: int = 2) -> DecisionTree:
    return DecisionTree(max_depth, min_samples_split).fit(X, y)


def tree_predict(model: DecisionTree, x) -> np.ndarray:
    return model.predict(x)


@dataclass
class RandomForest:
    n_trees: int = 100
    features_per_split: int | None = None  # None -> floor(sqrt(d))
    max_depth: int = 12
    min_samples_split: int = 2
    bootstrap: bool = True
    seed: int = 0
    trees: list = field(default_factory=list)
    tree_seeds: list = field(default_factory=list)

    def fit(self, X, y) -> "RandomForest":
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        k = self.features_per_split or max(1, math.isqrt(X.shape[1]))
        seqs = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.tree_seeds = [int(s.generate_state(1)[0]) for s in seqs]
        self.trees = []
        for s in self.tree_seeds:
            rng = np.random.default_rng(s)
            idx = rng.integers(0, len(y), size=len(y)) if self.bootstrap else np.arange(len(y))
            tree = DecisionTree(self.max_depth, self.min_samples_split, k)
            self.trees.append(tree.fit(X[idx], y[idx], rng))
        return self

    def votes(self, X) -> np.ndarray:
        return np.sum([t.predict(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        # strict majority; a tied vote is benign
        return (2 * self.votes(X) > len(self.trees)).astype(np.int64)

    def to_json(self) -> dict:
        return {"n_trees": self.n_trees, "features_per_split": self.features_per_split,
                "max_depth": self.max_depth, "min_samples_split": self.min_samples_split,
                "bootstrap": self.bootstrap, "seed": self.seed, "tree_seeds": self.tree_seeds,
                "trees": [t.to_json() for t in self.trees]}

    @classmethod
    def from_json(cls, d: dict) -> "RandomForest":
        d = dict(d)
        d["trees"] = [DecisionTree.from_json(t) for t in d["trees"]]
        return cls(**d)


def forest_fit(X, y, n_trees: int = 100, features_per_split: int | None = None, seed: int = 0,
               bootstrap: bool = True, max_depth: int = 12) -> RandomForest:
    return RandomForest(n_trees, features_per_split, max_depth, bootstrap=bootstrap, seed=seed).fit(X, y)


def forest_predict(model: RandomForest, x) -> np.ndarray:
    return model.predict(x)
