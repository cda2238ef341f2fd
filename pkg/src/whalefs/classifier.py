"""Brute-force k-nearest-neighbour classifier.

Distances are squared Euclidean (same ordering as Euclidean). Neighbour ties
at the k-th distance go to the lower training index, so predictions do not
depend on the sort algorithm. Vote ties go to the larger class label, which
for binary Normal/Attack labels means Attack.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .dataset import EncodedDataset
from .masking import FeatureMask, apply_mask

_CHUNK_CELLS = 1 << 22


def _select_neighbours(D: np.ndarray, k: int) -> np.ndarray:
    """Boolean (m, n) matrix marking each row's k nearest columns."""
    kth = np.partition(D, k - 1, axis=1)[:, k - 1:k]
    closer = D < kth
    at_kth = D == kth
    need = k - closer.sum(axis=1, keepdims=True)
    return closer | (at_kth & (np.cumsum(at_kth, axis=1) <= need))


class KNNClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, n_neighbors: int = 5):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=float)
        check_classification_targets(y)
        k = self.n_neighbors
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise ValueError(f"n_neighbors must be a positive integer, got {k!r}")
        if k > len(X):
            raise ValueError(f"n_neighbors={k} exceeds n_samples={len(X)}")
        self.classes_, self._y_codes = np.unique(y, return_inverse=True)
        self._fit_X = X
        self.n_samples_fit_ = len(X)
        return self

    def _check_query(self, X):
        check_is_fitted(self)
        return validate_data(self, X, dtype=float, reset=False)

    def vote_counts(self, X) -> np.ndarray:
        """Per-class neighbour counts, shape (n_queries, n_classes)."""
        X = self._check_query(X)
        onehot = np.zeros((self.n_samples_fit_, len(self.classes_)), dtype=np.int64)
        onehot[np.arange(self.n_samples_fit_), self._y_codes] = 1
        out = np.empty((len(X), len(self.classes_)), dtype=np.int64)
        step = max(1, _CHUNK_CELLS // self.n_samples_fit_)
        for start in range(0, len(X), step):
            D = cdist(X[start:start + step], self._fit_X, "sqeuclidean")
            out[start:start + step] = _select_neighbours(D, self.n_neighbors) @ onehot
        return out

    def predict(self, X) -> np.ndarray:
        counts = self.vote_counts(X)
        # argmax on the reversed class axis picks the largest label among ties
        last = counts.shape[1] - 1 - np.argmax(counts[:, ::-1], axis=1)
        return self.classes_[last]

    def kneighbors(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Euclidean distances and indices of the k nearest rows, nearest first."""
        X = self._check_query(X)
        D = cdist(X, self._fit_X, "sqeuclidean")
        idx = np.argsort(D, axis=1, kind="stable")[:, : self.n_neighbors]
        return np.sqrt(np.take_along_axis(D, idx, axis=1)), idx


def fit_knn(data: EncodedDataset, mask: FeatureMask, k: int = 5) -> KNNClassifier:
    """Fit a KNN model on the columns of ``data`` selected by ``mask``."""
    if mask.selected_count() == 0:
        raise ValueError("mask selects no features")
    if len(data) == 0:
        raise ValueError("empty training data")
    return KNNClassifier(n_neighbors=k).fit(apply_mask(mask, data.X), data.y)
