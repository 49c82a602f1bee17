"""kNN accuracy performance model over historical segments.

The regressor is multi-output: one row of statistics (NaN where a model was
not sampled) predicts the accuracy of every model from a single shared
neighbor set.
"""

from __future__ import annotations

import threading
from typing import Callable, Hashable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .core import HistoricalDataset, ObservationSet

DEFAULT_K_GRID = (5, 10, 25, 50)
DEFAULT_METRIC_GRID = ("L1", "L2")


class KNNAccuracyRegressor(RegressorMixin, BaseEstimator):
    """k-nearest-neighbor regressor tolerant of missing features.

    Parameters
    ----------
    k : int
        Number of neighbors.
    metric : {"L1", "L2"}
        Distance over the z-normalized statistics that are present.
    weights : {"uniform", "distance"}
        Neighbor aggregation. ``uniform`` is the plain mean.

    Features with zero spread in the training data are dropped. A row with no
    usable feature predicts the training mean of every output. Equal
    distances are broken by lower training index.
    """

    def __init__(self, k: int = 10, metric: str = "L2", weights: str = "uniform"):
        self.k = k
        self.metric = metric
        self.weights = weights

    def fit(self, X, y):
        X, y = validate_data(self, X, y, multi_output=True, y_numeric=True)
        if y.ndim == 1:
            y = y[:, None]
        if self.metric not in ("L1", "L2"):
            raise ValueError(f"metric must be 'L1' or 'L2', got {self.metric!r}")
        if self.weights not in ("uniform", "distance"):
            raise ValueError(f"weights must be 'uniform' or 'distance', got {self.weights!r}")
        if not 1 <= self.k <= len(X):
            raise ValueError(f"k={self.k} must lie in [1, n_samples={len(X)}]")
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.usable_ = np.isfinite(self.scale_) & (self.scale_ > 0)
        safe = np.where(self.usable_, self.scale_, 1.0)
        self.scale_ = safe
        self.Z_ = (X - self.mean_) / safe
        self.y_ = y.astype(float)
        self.y_mean_ = self.y_.mean(axis=0)
        return self

    def _distances(self, row: np.ndarray) -> np.ndarray | None:
        present = ~np.isnan(row) & self.usable_
        if not present.any():
            return None
        q = (row[present] - self.mean_[present]) / self.scale_[present]
        diff = self.Z_[:, present] - q
        if self.metric == "L1":
            return np.abs(diff).sum(axis=1)
        return np.sqrt((diff * diff).sum(axis=1))

    def kneighbors(self, row) -> tuple[np.ndarray, np.ndarray] | None:
        """Sorted neighbor indices and their distances, or None if no feature is usable."""
        check_is_fitted(self)
        d = self._distances(np.asarray(row, dtype=float))
        if d is None:
            return None
        k = self.k
        if k >= len(d):
            idx = np.arange(len(d))
        else:
            part = np.argpartition(d, k - 1)[:k]
            kth = d[part].max()
            less = np.flatnonzero(d < kth)
            ties = np.flatnonzero(d == kth)[: k - len(less)]
            idx = np.sort(np.concatenate([less, ties]))
        return idx, d[idx]

    def _predict_row(self, row: np.ndarray) -> np.ndarray:
        nn = self.kneighbors(row)
        if nn is None:
            return self.y_mean_.copy()
        idx, dist = nn
        if self.weights == "uniform":
            return self.y_[idx].mean(axis=0)
        zero = dist == 0
        if zero.any():
            return self.y_[idx[zero]].mean(axis=0)
        w = 1.0 / dist
        return (w[:, None] * self.y_[idx]).sum(axis=0) / w.sum()

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = check_array(X, ensure_all_finite="allow-nan")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return np.vstack([self._predict_row(r) for r in X])


def obs_to_row(dataset: HistoricalDataset, obs: ObservationSet) -> np.ndarray:
    """Feature row for ``obs``: raw value if recorded, else the bin's mean historical value."""
    row = np.full(dataset.n_models, np.nan)
    for o in obs:
        row[o.model_id] = o.value if o.value is not None else dataset.bin_values[o.model_id][o.bin]
    return row


class PredictionCache:
    """Predicted accuracy vectors keyed by canonical observation sets."""

    def __init__(self):
        self._data: dict[Hashable, np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_compute(self, key: Hashable, fn: Callable[[], np.ndarray]) -> np.ndarray:
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
        value = fn()
        value.setflags(write=False)
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
            self.misses += 1
            self._data[key] = value
        return value

    def __len__(self):
        return len(self._data)


def fit_predictor(dataset: HistoricalDataset, k: int = 10, metric: str = "L2",
                  weights: str = "uniform") -> KNNAccuracyRegressor:
    k = min(k, dataset.n_records)
    return KNNAccuracyRegressor(k=k, metric=metric, weights=weights).fit(
        dataset.stats, dataset.accuracies)


def predict_accuracy(
    dataset: HistoricalDataset,
    predictor: KNNAccuracyRegressor,
    obs: ObservationSet,
    cache: PredictionCache | None = None,
) -> np.ndarray:
    """Predicted accuracy of every model given ``obs`` (historical means when empty)."""

    def compute():
        if not obs:
            return np.array(dataset.means, dtype=float)
        return predictor._predict_row(obs_to_row(dataset, obs))

    if cache is None:
        return compute()
    return cache.get_or_compute(obs.key(with_values=True), compute)


def tune_knn(
    dataset: HistoricalDataset,
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    metric_grid: Sequence[str] = DEFAULT_METRIC_GRID,
    holdout_fraction: float = 0.2,
    seed: int = 0,
) -> KNNAccuracyRegressor:
    """Pick (k, metric) by holdout MSE with every statistic observed; refit on all data.

    The returned regressor carries ``tuning_results_``: (k, metric, mse) rows.
    """
    if not k_grid or not metric_grid:
        raise ValueError("empty tuning grid")
    n = dataset.n_records
    n_hold = int(round(holdout_fraction * n))
    n_train = n - n_hold
    if n_hold < 1 or n_train < max(k_grid):
        raise ValueError(
            f"dataset of {n} records too small for holdout {holdout_fraction} and k up to {max(k_grid)}")
    perm = np.random.default_rng(seed).permutation(n)
    tr, ho = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    X, Y = dataset.stats, dataset.accuracies
    results = []
    for k in k_grid:
        for metric in metric_grid:
            est = KNNAccuracyRegressor(k=k, metric=metric).fit(X[tr], Y[tr])
            mse = float(np.mean((est.predict(X[ho]) - Y[ho]) ** 2))
            results.append((k, metric, mse))
    best = min(results, key=lambda r: r[2])
    est = KNNAccuracyRegressor(k=min(best[0], n), metric=best[1]).fit(X, Y)
    est.tuning_results_ = results
    return est
