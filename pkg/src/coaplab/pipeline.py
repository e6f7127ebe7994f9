"""End-to-end composition: capture -> windows -> tensors -> models -> report."""

from __future__ import annotations

import hashlib
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifiers import (FeatureDataset, GaussianNB, LinearSVM, LstmModel, RandomForest,
                          DecisionTree, evaluate, train_test_split)
from .classifiers.bayes import nb_fit
from .classifiers.lstm import lstm_fit
from .classifiers.metrics import report_entry
from .classifiers.svm import svm_fit
from .classifiers.tree import forest_fit, tree_fit
from .features import (DEFAULT_SCHEMA, TokenVocabulary, WindowFeaturizer, default_mask,
                       extract_features, tokenize)
from .ga import GaConfig
from .traffic import ScenarioConfig
from .windows import DEFAULT_THRESHOLD, WINDOW_US, LabeledWindow

log = logging.getLogger("coaplab")

MODEL_NAMES = ("svm", "nb", "tree", "forest", "lstm")
MODEL_CLASSES = {"nb": GaussianNB, "tree": DecisionTree, "forest": RandomForest,
                 "svm": LinearSVM, "lstm": LstmModel}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def stage_seed(root: int, stage: str) -> int:
    """Independent 32-bit seed for one pipeline stage, derived from the root seed."""
    return int(np.random.SeedSequence([root, zlib.crc32(stage.encode())]).generate_state(1)[0])


@dataclass(frozen=True)
class Hyperparameters:
    tree_max_depth: int = 12
    forest_trees: int = 100
    forest_features_per_split: int | None = None
    svm_lambda: float = 1e-4
    svm_epochs: int = 20
    lstm_hidden: int = 32
    lstm_epochs: int = 10
    lstm_learning_rate: float = 0.01


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    seed: int = 0
    window_us: int = WINDOW_US
    threshold: float = DEFAULT_THRESHOLD
    test_fraction: float = 0.2
    models: tuple[str, ...] = MODEL_NAMES
    use_ga: bool = False
    ga: GaConfig = field(default_factory=GaConfig)
    ga_max_rows: int = 2000
    hyper: Hyperparameters = field(default_factory=Hyperparameters)

    def __post_init__(self):
        bad = set(self.models) - set(MODEL_NAMES)
        if bad:
            raise ValueError(f"unknown models: {sorted(bad)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.to_dict()
        d["models"] = list(self.models)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        """Accept either a full run config or a bare scenario config."""
        if "scenario" not in d:
            return cls(scenario=ScenarioConfig.from_dict(d))
        d = dict(d)
        d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
        if "ga" in d:
            d["ga"] = GaConfig(**d["ga"])
        if "hyper" in d:
            d["hyper"] = Hyperparameters(**d["hyper"])
        if "models" in d:
            d["models"] = tuple(d["models"])
        return cls(**d)


def load_run_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid config JSON: {exc}") from None
    return RunConfig.from_dict(raw)


# -- datasets ----------------------------------------------------------------

@dataclass
class PreparedData:
    train: FeatureDataset
    test: FeatureDataset
    train_idx: np.ndarray
    test_idx: np.ndarray
    featurizer: WindowFeaturizer
    window_index: list[int]


def prepare_dataset(labeled: Sequence[LabeledWindow], mask=None, test_fraction: float = 0.2,
                    seed: int = 0) -> PreparedData:
    """Split windows, fit the vocabulary on the training side, and build tensors."""
    y = np.array([int(lw.label) for lw in labeled])
    tr, te = train_test_split(y, test_fraction, seed)
    fz = WindowFeaturizer(default_mask() if mask is None else mask)
    fz.fit([labeled[i].window.packets for i in tr])
    tensor = fz.transform([lw.window.packets for lw in labeled])
    full = FeatureDataset(tensor, y)
    return PreparedData(full.subset(tr), full.subset(te), tr, te, fz, [lw.index for lw in labeled])


def packet_table(labeled: Sequence[LabeledWindow], max_rows: int | None = None, seed: int = 0):
    """Tokenized 42-column per-packet matrix with window-inherited labels.

    When ``max_rows`` is set, each class is subsampled in proportion.
    """
    rows, y = [], []
    for lw in labeled:
        for p in lw.window.packets:
            rows.append(extract_features(p, DEFAULT_SCHEMA))
            y.append(int(lw.label))
    y = np.asarray(y)
    if max_rows is not None and len(y) > max_rows:
        rng = np.random.default_rng(seed)
        keep = []
        for cls in np.unique(y):
            idx = np.flatnonzero(y == cls)
            n = max(2, int(round(max_rows * len(idx) / len(y))))
            keep.append(rng.choice(idx, size=min(n, len(idx)), replace=False))
        keep = np.sort(np.concatenate(keep))
        rows, y = [rows[i] for i in keep], y[keep]
    vocab = TokenVocabulary(DEFAULT_SCHEMA.kinds)
    return tokenize(rows, vocab), y


# -- models ------------------------------------------------------------------

def fit_model(name: str, train: FeatureDataset, seed: int, hp: Hyperparameters = Hyperparameters()):
    train.check_trainable()
    if name == "nb":
        return nb_fit(train.X, train.y)
    if name == "tree":
        return tree_fit(train.X, train.y, max_depth=hp.tree_max_depth)
    if name == "forest":
        return forest_fit(train.X, train.y, hp.forest_trees, hp.forest_features_per_split, seed,
                          max_depth=hp.tree_max_depth)
    if name == "svm":
        return svm_fit(train.X, train.y, hp.svm_lambda, hp.svm_epochs, seed)
    if name == "lstm":
        return lstm_fit(train.sequences, train.y, hp.lstm_epochs, hp.lstm_learning_rate,
                        hp.lstm_hidden, seed)
    raise ValueError(f"unknown model {name!r}")


def model_inputs(name: str, data: FeatureDataset) -> np.ndarray:
    return data.sequences if name == "lstm" else data.X


def evaluate_model(name: str, model, test: FeatureDataset, seed: int) -> dict:
    cm = evaluate(model, model_inputs(name, test), test.y)
    return report_entry(name, cm, seed)


def save_model(name: str, model, seed: int, path, config: dict | None = None) -> None:
    doc = {"model": name, "seed": seed, "config": config or {}, "params": model.to_json()}
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path):
    doc = json.loads(Path(path).read_text())
    name = doc["model"]
    return name, MODEL_CLASSES[name].from_json(doc["params"]), doc


# -- misc --------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Apply non-None overrides; scenario fields may be given by name."""
    scen = {k: kw.pop(k) for k in list(kw) if k in ScenarioConfig.__dataclass_fields__}
    scen = {k: v for k, v in scen.items() if v is not None}
    kw = {k: v for k, v in kw.items() if v is not None}
    if scen:
        kw["scenario"] = replace(cfg.scenario, **scen)
    return replace(cfg, **kw)
