"""Wrapper feature selection with a fixed-cardinality genetic algorithm.

Chromosomes are boolean masks over the feature columns with exactly ``k``
bits set.  Fitness is the mean stratified k-fold accuracy of a depth-capped
decision tree trained on the selected columns.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classifiers.data import DatasetError
from .classifiers.tree import DecisionTree


class GaError(ValueError):
    pass


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 40
    generations: int = 30
    crossover_rate: float = 0.9
    mutation_rate: float = 0.02
    elitism_count: int = 2
    k: int = 16
    fitness_folds: int = 3
    fitness_max_depth: int = 5
    rng_seed: int = 0

    def validate(self, n_features: int | None = None) -> None:
        if self.population_size < 2:
            raise GaError("population_size must be at least 2")
        if not 0 <= self.elitism_count <= self.population_size:
            raise GaError("elitism_count must lie in [0, population_size]")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise GaError(f"{name} must be a probability")
        if self.k < 1:
            raise GaError("k must be positive")
        if n_features is not None and self.k > n_features:
            raise GaError(f"k={self.k} exceeds the {n_features} available features")
        if self.fitness_folds < 2:
            raise GaError("fitness_folds must be at least 2")


@dataclass
class Chromosome:
    mask: np.ndarray
    fitness: float | None = None

    @property
    def key(self) -> bytes:
        return np.packbits(self.mask).tobytes()

    def copy(self) -> "Chromosome":
        return Chromosome(self.mask.copy(), self.fitness)


def random_mask(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=k, replace=False)] = True
    return mask


def init_population(cfg: GaConfig, n_features: int = 42) -> list[Chromosome]:
    cfg.validate(n_features)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 0]))
    return [Chromosome(random_mask(rng, n_features, cfg.k)) for _ in range(cfg.population_size)]


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Deal each class's shuffled indices round-robin into ``folds`` groups."""
    rng = np.random.default_rng(seed)
    out = [[] for _ in range(folds)]
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        for j, i in enumerate(idx):
            out[j % folds].append(i)
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in out]


class FitnessEvaluator:
    """Cached cross-validated tree accuracy for feature masks.

    Fold assignment is drawn once, so equal masks always get equal scores.
    """

    def __init__(self, X, y, folds: int = 3, max_depth: int = 5, seed: int = 0):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        if len(self.y) == 0:
            raise DatasetError("fitness data is empty")
        if len(np.unique(self.y)) < 2:
            raise DatasetError("fitness needs both classes present")
        self.max_depth = max_depth
        self.folds = stratified_folds(self.y, folds, seed)
        self.cache: dict[bytes, float] = {}
        self.evaluations = 0

    def score(self, mask) -> float:
        mask = np.asarray(mask, dtype=bool)
        key = np.packbits(mask).tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        self.evaluations += 1
        Xm = self.X[:, mask]
        accs = []
        for test in self.folds:
            train = np.setdiff1d(np.arange(len(self.y)), test, assume_unique=True)
            tree = DecisionTree(max_depth=self.max_depth).fit(Xm[train], self.y[train])
            accs.append(np.mean(tree.predict(Xm[test]) == self.y[test]))
        value = float(np.mean(accs))
        self.cache[key] = value
        return value

    def __call__(self, chromosome: Chromosome) -> float:
        chromosome.fitness = self.score(chromosome.mask)
        return chromosome.fitness


def fitness(c: Chromosome, X, y, cfg: GaConfig = GaConfig()) -> float:
    return FitnessEvaluator(X, y, cfg.fitness_folds, cfg.fitness_max_depth, cfg.rng_seed)(c)


def repair(mask: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Flip random bits until exactly ``k`` are set."""
    mask = mask.copy()
    on = int(mask.sum())
    if on > k:
        mask[rng.choice(np.flatnonzero(mask), size=on - k, replace=False)] = False
    elif on < k:
        mask[rng.choice(np.flatnonzero(~mask), size=k - on, replace=False)] = True
    return mask


def swap_mutate(mask: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Each bit, with probability ``rate``, trades places with a random bit of the other value."""
    mask = mask.copy()
    for i in np.flatnonzero(rng.random(len(mask)) < rate):
        other = np.flatnonzero(mask != mask[i])
        if len(other):
            j = rng.choice(other)
            mask[i], mask[j] = mask[j], mask[i]
    return mask


def elite_indices(pop: list[Chromosome], count: int) -> list[int]:
    # stable: among equal fitness, earlier chromosomes win
    order = sorted(range(len(pop)), key=lambda i: -pop[i].fitness)
    return sorted(order[:count])


def tournament(pop: list[Chromosome], rng: np.random.Generator) -> Chromosome:
    a, b = rng.integers(len(pop), size=2)
    return pop[a] if pop[a].fitness >= pop[b].fitness else pop[b]


def select_crossover_mutate(pop: list[Chromosome], cfg: GaConfig, rng: np.random.Generator) -> list[Chromosome]:
    if any(c.fitness is None for c in pop):
        raise GaError("every chromosome needs a fitness before selection")
    nxt = [pop[i].copy() for i in elite_indices(pop, cfg.elitism_count)]
    while len(nxt) < cfg.population_size:
        p1, p2 = tournament(pop, rng), tournament(pop, rng)
        if rng.random() < cfg.crossover_rate:
            pick = rng.random(len(p1.mask)) < 0.5
            child = repair(np.where(pick, p1.mask, p2.mask), cfg.k, rng)
        else:
            child = p1.mask.copy()
        child = swap_mutate(child, cfg.mutation_rate, rng)
        nxt.append(Chromosome(child))
    return nxt


@dataclass
class GaResult:
    best_mask: np.ndarray
    best_fitness: float
    history: list = field(default_factory=list)  # best fitness per generation
    mean_history: list = field(default_factory=list)
    evaluations: int = 0


def run_ga(X, y, cfg: GaConfig = GaConfig(), evaluator: FitnessEvaluator | None = None) -> GaResult:
    """Evolve ``cfg.generations`` times and return the best mask seen."""
    X = np.asarray(X)
    cfg.validate(X.shape[1])
    if evaluator is None:
        evaluator = FitnessEvaluator(X, y, cfg.fitness_folds, cfg.fitness_max_depth, cfg.rng_seed)
    pop = init_population(cfg, X.shape[1])
    gen_seeds = np.random.SeedSequence([cfg.rng_seed, 1]).spawn(cfg.generations)
    result = GaResult(pop[0].mask, -np.inf)

    def record(pop):
        scores = [evaluator(c) for c in pop]
        best = int(np.argmax(scores))
        if scores[best] > result.best_fitness:
            result.best_mask, result.best_fitness = pop[best].mask.copy(), scores[best]
        result.history.append(scores[best])
        result.mean_history.append(float(np.mean(scores)))

    record(pop)
    for seq in gen_seeds:
        pop = select_crossover_mutate(pop, cfg, np.random.default_rng(seq))
        record(pop)
    result.evaluations = evaluator.evaluations
    return result


def ga_report(result: GaResult, cfg: GaConfig, column_names) -> dict:
    return {
        "config": asdict(cfg),
        "best_fitness": result.best_fitness,
        "best_per_generation": result.history,
        "mean_per_generation": result.mean_history,
        "selected_columns": [n for n, keep in zip(column_names, result.best_mask) if keep],
        "evaluations": result.evaluations,
    }


def write_ga_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
