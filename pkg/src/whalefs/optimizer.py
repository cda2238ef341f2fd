"""Hybrid whale-optimization / genetic search over feature masks.

Every whale holds a continuous position in [0, 1]^d whose binarization is
the candidate mask. One iteration moves every non-elite whale with the whale
update rules (encircle the leader, spiral around it, or explore toward a
random peer), scores the moved whales, then runs a genetic pass (binary
tournament, uniform crossover, redraw mutation) over part of the non-elite
population and scores the offspring. Elites are never touched, so the
best-so-far fitness never rises.

All randomness comes from generators seeded by ``(seed, phase, iteration,
agent)``, so results do not depend on evaluation order or thread count.
"""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, validate_data

from .dataset import EncodedDataset, FeatureSchema
from .fitness import EvalProtocol, FitnessEvaluator, FitnessValue
from .masking import BINARIZE_MODES, THRESHOLD, FeatureMask, binarize

_INIT, _WOA, _GA = 0, 1, 2


def substream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, keys)])


@dataclass
class SearchAgent:
    position: np.ndarray
    mask: FeatureMask
    fitness: FitnessValue | None = None

    def copy(self) -> "SearchAgent":
        return SearchAgent(self.position.copy(), self.mask, self.fitness)

    @property
    def score(self) -> float:
        return math.inf if self.fitness is None else self.fitness.scalar


@dataclass(frozen=True)
class OptimizerConfig:
    population: int = 100
    iterations: int = 100
    spiral_b: float = 1.0
    crossover_rate: float = 0.8
    mutation_rate: float | None = None  # None means 1/d
    ga_fraction: float = 0.5
    elitism: int = 1
    seed: int = 0
    binarize_mode: str = THRESHOLD
    protocol: EvalProtocol = field(default_factory=EvalProtocol)
    use_woa: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        for name in ("crossover_rate", "ga_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must lie in [0, population)")
        if self.binarize_mode not in BINARIZE_MODES:
            raise ValueError(f"binarize_mode must be one of {BINARIZE_MODES}")

    def mutation_for(self, d: int) -> float:
        return 1.0 / d if self.mutation_rate is None else self.mutation_rate

    def to_dict(self) -> dict:
        out = asdict(self)
        out["protocol"] = self.protocol.to_dict()
        return out


@dataclass(frozen=True)
class LogEntry:
    iteration: int
    best_fitness: float
    mean_fitness: float
    best_feature_count: int


class ConvergenceLog:
    HEADER = "iteration,best_fitness,mean_fitness,best_feature_count"

    def __init__(self):
        self.entries: list[LogEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def record(self, iteration: int, best: SearchAgent, population: list[SearchAgent]):
        mean = float(np.mean([a.score for a in population]))
        self.entries.append(LogEntry(iteration, best.score, mean, best.mask.selected_count()))

    @property
    def best_series(self) -> np.ndarray:
        return np.array([e.best_fitness for e in self.entries])

    @property
    def mean_series(self) -> np.ndarray:
        return np.array([e.mean_fitness for e in self.entries])

    def is_monotone(self) -> bool:
        s = self.best_series
        return bool(np.all(s[1:] <= s[:-1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.HEADER + "\n")
        for e in self.entries:
            buf.write(f"{e.iteration},{e.best_fitness!r},{e.mean_fitness!r},{e.best_feature_count}\n")
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceLog":
        lines = text.strip().splitlines()
        if not lines or lines[0] != cls.HEADER:
            raise ValueError("not a convergence log")
        log = cls()
        for line in lines[1:]:
            it, best, mean, count = line.split(",")
            log.entries.append(LogEntry(int(it), float(best), float(mean), int(count)))
        return log


def _make_agent(position: np.ndarray, config: OptimizerConfig,
                rng: np.random.Generator) -> SearchAgent:
    position = np.clip(position, 0.0, 1.0)
    return SearchAgent(position, binarize(position, config.binarize_mode, rng))


def _evaluate(population: list[SearchAgent], evaluator: FitnessEvaluator, n_jobs: int):
    todo = [a for a in population if a.fitness is None]
    if not todo:
        return
    for agent, value in zip(todo, evaluator.evaluate_many([a.mask for a in todo], n_jobs)):
        agent.fitness = value


def initialize(config: OptimizerConfig, d: int, rng: np.random.Generator,
               evaluator: FitnessEvaluator | None = None) -> list[SearchAgent]:
    """Uniform random positions, binarized and (given an evaluator) scored."""
    positions = rng.random((config.population, d))
    population = [_make_agent(p, config, rng) for p in positions]
    if evaluator is not None:
        _evaluate(population, evaluator, config.n_jobs)
    return population


def woa_update(agent: SearchAgent, best: SearchAgent, peers: list[SearchAgent],
               t: int, T: int, config: OptimizerConfig,
               rng: np.random.Generator) -> SearchAgent:
    """One whale move; the returned agent is unevaluated.

    ``A``, ``C``, ``p`` and ``l`` are drawn once per call and shared by all
    coordinates. ``|A| >= 1`` on the encircling branch swaps the leader for
    a uniformly drawn peer.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    a = 2.0 * (1.0 - t / T)
    r1, r2, p = rng.random(3)
    l = rng.uniform(-1.0, 1.0)
    A = 2.0 * a * r1 - a
    C = 2.0 * r2
    x = agent.position
    if p < 0.5:
        target = best.position if abs(A) < 1 else peers[rng.integers(len(peers))].position
        new = target - A * np.abs(C * target - x)
    else:
        lead = best.position
        new = np.abs(lead - x) * math.exp(config.spiral_b * l) * math.cos(2 * math.pi * l) + lead
    return _make_agent(new, config, rng)


def _elite_indices(population: list[SearchAgent], n: int) -> list[int]:
    scores = np.array([a.score for a in population])
    return [int(i) for i in np.argsort(scores, kind="stable")[:n]]


def ga_step(population: list[SearchAgent], config: OptimizerConfig,
            rng: np.random.Generator) -> list[SearchAgent]:
    """Genetic pass over the non-elite agents.

    ``ga_fraction`` of the non-elite agents (rounded down to an even count)
    are picked one at a time by binary tournament without replacement and
    paired in pick order. Each pair crosses over with probability
    ``crossover_rate`` (uniform swap of position coordinates), then each
    child coordinate is redrawn with probability ``mutation_rate``. Children
    take their parents' slots unevaluated.
    """
    if len(population) < 2:
        raise ValueError("population must have at least 2 agents")
    d = len(population[0].position)
    mutation = config.mutation_for(d)
    elites = set(_elite_indices(population, config.elitism))
    pool = [i for i in range(len(population)) if i not in elites]
    n_select = int(config.ga_fraction * len(pool)) // 2 * 2
    picked = []
    for _ in range(n_select):
        i, j = rng.choice(len(pool), size=2, replace=False)
        a, b = pool[i], pool[j]
        sa, sb = population[a].score, population[b].score
        win = i if (sa, a) < (sb, b) else j
        picked.append(pool.pop(win))
    out = list(population)
    for a, b in zip(picked[::2], picked[1::2]):
        c1, c2 = population[a].position.copy(), population[b].position.copy()
        if rng.random() < config.crossover_rate:
            swap = rng.random(d) < 0.5
            c1[swap], c2[swap] = population[b].position[swap], population[a].position[swap]
        for slot, child in ((a, c1), (b, c2)):
            hit = rng.random(d) < mutation
            child[hit] = rng.random(int(hit.sum()))
            out[slot] = _make_agent(child, config, rng)
    return out


Callback = Callable[[int, SearchAgent, list[SearchAgent]], None]


def run(data: EncodedDataset, config: OptimizerConfig,
        evaluator: FitnessEvaluator | None = None,
        callback: Callback | None = None) -> tuple[SearchAgent, ConvergenceLog]:
    """Search for the best mask on ``data``; returns the best agent and its log."""
    evaluator = evaluator or FitnessEvaluator(data, config.protocol)
    d = data.n_features
    T = config.iterations
    population = initialize(config, d, substream(config.seed, _INIT), evaluator)
    log = ConvergenceLog()
    best = population[_elite_indices(population, 1)[0]].copy()
    log.record(0, best, population)
    if callback:
        callback(0, best, population)

    for t in range(T):
        elites = _elite_indices(population, max(config.elitism, 1))
        leader = population[elites[0]]
        protected = set(elites[: config.elitism])
        if config.use_woa:
            population = [
                agent if i in protected else
                woa_update(agent, leader, population, t, T, config,
                           substream(config.seed, _WOA, t, i))
                for i, agent in enumerate(population)
            ]
            _evaluate(population, evaluator, config.n_jobs)
        if config.ga_fraction > 0:
            population = ga_step(population, config, substream(config.seed, _GA, t))
            _evaluate(population, evaluator, config.n_jobs)
        champion = population[_elite_indices(population, 1)[0]]
        if champion.score < best.score:
            best = champion.copy()
        log.record(t + 1, best, population)
        if callback:
            callback(t + 1, best, population)
    return best, log


class WOAGASelector(SelectorMixin, BaseEstimator):
    """Scikit-learn feature selector driven by :func:`run`.

    Works on any binary classification data; ``X`` should already be scaled
    to comparable ranges (e.g. min-max) since the default inner classifier
    is Euclidean KNN.
    """

    def __init__(self, population=100, iterations=100, spiral_b=1.0, crossover_rate=0.8,
                 mutation_rate=None, ga_fraction=0.5, elitism=1, binarize="threshold",
                 use_woa=True, holdout_fraction=0.3, k=5, alpha=0.99, estimator=None,
                 random_state=0, n_jobs=1):
        self.population = population
        self.iterations = iterations
        self.spiral_b = spiral_b
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.ga_fraction = ga_fraction
        self.elitism = elitism
        self.binarize = binarize
        self.use_woa = use_woa
        self.holdout_fraction = holdout_fraction
        self.k = k
        self.alpha = alpha
        self.estimator = estimator
        self.random_state = random_state
        self.n_jobs = n_jobs

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.target_tags.required = True
        return tags

    def _config(self) -> OptimizerConfig:
        protocol = EvalProtocol(self.holdout_fraction, int(self.random_state), self.k, self.alpha)
        return OptimizerConfig(
            population=self.population, iterations=self.iterations, spiral_b=self.spiral_b,
            crossover_rate=self.crossover_rate, mutation_rate=self.mutation_rate,
            ga_fraction=self.ga_fraction, elitism=self.elitism, seed=int(self.random_state),
            binarize_mode=self.binarize, protocol=protocol, use_woa=self.use_woa,
            n_jobs=self.n_jobs)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=float)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(
                f"WOAGASelector supports binary targets only; got {len(self.classes_)} class(es)")
        codes = (y == self.classes_[1]).astype(np.int8)
        bounds = np.column_stack([X.min(axis=0), X.max(axis=0)])
        data = EncodedDataset(X, codes, FeatureSchema.numeric(X.shape[1]), bounds)
        config = self._config()
        evaluator = FitnessEvaluator(data, config.protocol, self.estimator)
        best, log = run(data, config, evaluator)
        self.best_agent_ = best
        self.support_ = np.array(best.mask.bits)
        self.fitness_ = best.fitness
        self.convergence_log_ = log
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self)
        return self.support_


def variant(config: OptimizerConfig, name: str) -> OptimizerConfig:
    """Ablations of the hybrid: ``woa_ga`` (unchanged), ``woa_only`` or ``ga_only``."""
    if name == "woa_ga":
        return config
    if name == "woa_only":
        return replace(config, ga_fraction=0.0)
    if name == "ga_only":
        return replace(config, use_woa=False)
    raise ValueError(f"unknown optimizer variant {name!r}")
