"""Wrapper fitness of a feature mask.

A mask is scored on two objectives, both minimized: the fraction of features
it keeps and the classification error of a KNN model restricted to those
features on a fixed inner holdout. The optimizer works on the weighted sum
``alpha * error + (1 - alpha) * feature_ratio``.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from sklearn.base import clone

from .classifier import KNNClassifier
from .dataset import EncodedDataset, stratified_split
from .masking import FeatureMask, apply_mask
from .metrics import confusion, error_rate


@dataclass(frozen=True)
class FitnessValue:
    f1: float
    f2: float
    scalar: float


PENALTY = FitnessValue(f1=0.0, f2=1.0, scalar=1.0)


@dataclass(frozen=True)
class EvalProtocol:
    """How masks are scored.

    ``holdout_fraction`` of the training rows (stratified, drawn once with
    ``eval_seed``) is held out and classified by a KNN fit on the rest.
    """

    holdout_fraction: float = 0.3
    eval_seed: int = 0
    k: int = 5
    alpha: float = 0.99

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def scalarize(f1: float, f2: float, alpha: float) -> float:
    return alpha * f2 + (1.0 - alpha) * f1


class FitnessEvaluator:
    """Scores masks against one fixed inner split and memoizes the results.

    ``estimator`` may be any scikit-learn classifier; it defaults to
    :class:`KNNClassifier` with ``protocol.k`` neighbours. Evaluation is
    thread-safe.
    """

    def __init__(self, train: EncodedDataset, protocol: EvalProtocol | None = None,
                 estimator=None):
        self.protocol = protocol or EvalProtocol()
        self.estimator = estimator
        self.fit_part, self.eval_part = stratified_split(
            train, 1.0 - self.protocol.holdout_fraction, self.protocol.eval_seed)
        self.n_features = train.n_features
        self._cache: dict[bytes, FitnessValue] = {}
        self._lock = threading.Lock()
        self.n_evaluations = 0

    def _model(self):
        if self.estimator is None:
            return KNNClassifier(n_neighbors=self.protocol.k)
        return clone(self.estimator)

    def _compute(self, mask: FeatureMask) -> FitnessValue:
        if len(mask) != self.n_features:
            raise ValueError(f"mask length {len(mask)} != feature count {self.n_features}")
        L = mask.selected_count()
        if L == 0:
            return PENALTY
        model = self._model().fit(apply_mask(mask, self.fit_part.X), self.fit_part.y)
        pred = model.predict(apply_mask(mask, self.eval_part.X))
        f1 = L / self.n_features
        f2 = error_rate(confusion(pred, self.eval_part.y))
        return FitnessValue(f1, f2, scalarize(f1, f2, self.protocol.alpha))

    def __call__(self, mask: FeatureMask) -> FitnessValue:
        key = mask.key()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = self._compute(mask)
        with self._lock:
            if key not in self._cache:
                self.n_evaluations += 1
            self._cache[key] = value
        return value

    def evaluate_many(self, masks: Iterable[FeatureMask], n_jobs: int = 1) -> list[FitnessValue]:
        """Score several masks; distinct uncached masks fan out over threads."""
        masks = list(masks)
        if n_jobs > 1:
            pending, seen = [], set()
            with self._lock:
                for m in masks:
                    key = m.key()
                    if key not in self._cache and key not in seen:
                        seen.add(key)
                        pending.append(m)
            if len(pending) > 1:
                with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                    list(pool.map(self, pending))
        return [self(m) for m in masks]


def evaluate(mask: FeatureMask, train: EncodedDataset,
             protocol: EvalProtocol | None = None) -> FitnessValue:
    return FitnessEvaluator(train, protocol)(mask)


def exhaustive_optimum(evaluator: FitnessEvaluator) -> tuple[FeatureMask, FitnessValue]:
    """Best mask by brute-force enumeration; only sensible for small d."""
    d = evaluator.n_features
    if d > 20:
        raise ValueError("exhaustive search is limited to 20 features")
    best = None
    for code in range(2 ** d):
        bits = np.array([(code >> j) & 1 for j in range(d)], dtype=bool)
        mask = FeatureMask(bits)
        value = evaluator(mask)
        if best is None or value.scalar < best[1].scalar:
            best = (mask, value)
    return best
