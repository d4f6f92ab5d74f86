"""K-nearest neighbours with banded dynamic time warping.

The distance between two rows is ``dtw(series_a, series_b) +
meta_weight * ||meta_a - meta_b||^2``: the series part is warped, the
trailing metadata columns are compared point-wise.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .errors import (
    BandTooNarrowError,
    ColumnMismatchError,
    EmptyInputError,
    KTooLargeError,
    LengthMismatchError,
)


@dataclass(frozen=True)
class DtwConfig:
    k: int = 3
    band_radius: int = 10
    meta_weight: float = 1.0
    train_subsample: int | None = None
    seed: int = 0


@numba.njit(cache=True, nogil=True)
def _dtw_banded(a, b, radius, prev, cur, offset=0.0, cutoff=np.inf):
    """Banded DTW; returns ``inf`` once ``offset`` plus every cell of a row exceeds ``cutoff``.

    Local costs are non-negative, so the final cost is at least the minimum
    of any completed row, and rounding is monotone, so abandoning never
    changes which rows win.
    """
    n = a.shape[0]
    inf = np.inf
    for j in range(n + 1):
        prev[j] = inf
        cur[j] = inf
    prev[0] = 0.0
    for i in range(1, n + 1):
        lo = max(1, i - radius)
        hi = min(n, i + radius)
        cur[lo - 1] = inf
        ai = a[i - 1]
        left = inf
        row_min = inf
        for j in range(lo, hi + 1):
            d = ai - b[j - 1]
            m = prev[j - 1]
            if prev[j] < m:
                m = prev[j]
            if left < m:
                m = left
            left = d * d + m
            cur[j] = left
            if left < row_min:
                row_min = left
        if hi < n:
            cur[hi + 1] = inf
        if row_min + offset > cutoff:
            return inf
        prev, cur = cur, prev
    return prev[n]


@numba.njit(cache=True, nogil=True)
def _kneighbors(test_s, test_m, train_s, train_m, radius, meta_weight, k):
    n_test = test_s.shape[0]
    n_train = train_s.shape[0]
    L = test_s.shape[1]
    n_meta = test_m.shape[1]
    prev = np.empty(L + 1)
    cur = np.empty(L + 1)
    out_idx = np.empty((n_test, k), dtype=np.int64)
    out_d = np.empty((n_test, k))
    best_d = np.empty(k)
    best_i = np.empty(k, dtype=np.int64)
    for t in range(n_test):
        for q in range(k):
            best_d[q] = np.inf
            best_i[q] = -1
        for r in range(n_train):
            meta = 0.0
            for c in range(n_meta):
                diff = test_m[t, c] - train_m[r, c]
                meta += meta_weight * diff * diff
            if meta > best_d[k - 1]:
                continue
            dist = _dtw_banded(test_s[t], train_s[r], radius, prev, cur, meta, best_d[k - 1])
            if dist == np.inf:
                continue
            dist = dist + meta
            # strict < keeps the earlier training row on ties
            if dist < best_d[k - 1]:
                q = k - 1
                while q > 0 and dist < best_d[q - 1]:
                    best_d[q] = best_d[q - 1]
                    best_i[q] = best_i[q - 1]
                    q -= 1
                best_d[q] = dist
                best_i[q] = r
        out_idx[t] = best_i
        out_d[t] = best_d
    return out_idx, out_d


def dtw(a, b, band_radius=10):
    """Banded DTW cost with squared local differences.

    ``band_radius=None`` lifts the band entirely.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise LengthMismatchError(f"dtw needs equal-length 1-D series, got {a.shape} and {b.shape}")
    n = a.shape[0]
    radius = n if band_radius is None else int(band_radius)
    if radius < 0:
        raise BandTooNarrowError("band_radius must be >= 0 to cover the diagonal")
    if n == 0:
        return 0.0
    buf = np.empty(n + 1)
    return float(_dtw_banded(a, b, min(radius, n), buf, np.empty(n + 1)))


class KnnDtwClassifier:
    """k-NN on DTW(series) plus weighted squared-Euclidean metadata distance.

    Parameters
    ----------
    config : DtwConfig
    n_series : int
        Number of leading columns that form the time series; the remaining
        columns are treated as metadata.
    n_jobs : int
        Threads used for prediction; test rows are split into contiguous
        chunks, so the result does not depend on this value.
    """

    def __init__(self, config=None, n_series=495, n_jobs=1):
        self.config = config or DtwConfig()
        self.n_series = n_series
        self.n_jobs = max(1, int(n_jobs))

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise EmptyInputError("no training rows")
        cfg = self.config
        if cfg.band_radius is not None and cfg.band_radius < 0:
            raise BandTooNarrowError("band_radius must be >= 0")
        cap = cfg.train_subsample
        if cap is not None and X.shape[0] > cap:
            rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x4B]))
            keep = np.sort(rng.choice(X.shape[0], size=cap, replace=False))
            X, y = X[keep], y[keep]
        if cfg.k > X.shape[0]:
            raise KTooLargeError(f"k={cfg.k} exceeds {X.shape[0]} training rows")
        if X.shape[1] < self.n_series:
            raise ColumnMismatchError(f"expected at least {self.n_series} columns")
        self.X_ = np.ascontiguousarray(X)
        self.y_ = y
        self.n_features_ = X.shape[1]
        return self

    def _split(self, X):
        return (
            np.ascontiguousarray(X[:, : self.n_series]),
            np.ascontiguousarray(X[:, self.n_series:]),
        )

    def kneighbors(self, X):
        """Indices and combined distances of the ``k`` nearest training rows."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise ColumnMismatchError(
                f"model was fitted on {self.n_features_} columns, got {X.shape[-1]}"
            )
        radius = self.n_series if self.config.band_radius is None else self.config.band_radius
        radius = min(radius, self.n_series)
        ts, tm = self._split(X)
        rs, rm = self._split(self.X_)
        args = (int(radius), float(self.config.meta_weight), self.config.k)
        if self.n_jobs == 1 or X.shape[0] < 2 * self.n_jobs:
            return _kneighbors(ts, tm, rs, rm, *args)
        bounds = np.linspace(0, X.shape[0], self.n_jobs + 1).astype(int)
        with ThreadPoolExecutor(self.n_jobs) as pool:
            parts = list(pool.map(
                lambda lo_hi: _kneighbors(ts[lo_hi[0]:lo_hi[1]], tm[lo_hi[0]:lo_hi[1]], rs, rm, *args),
                zip(bounds[:-1], bounds[1:])))
        return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])

    def predict_proba(self, X):
        idx, _ = self.kneighbors(X)
        k = self.config.k
        ones = self.y_[idx].sum(axis=1)
        return np.column_stack([(k - ones) / k, ones / k])


def knn_fit(train, cfg=None):
    """Fit on a FeatureMatrix, taking the series length from its column names."""
    n_series = sum(1 for c in train.column_names if c[0] == "t" and c[1:].isdigit())
    return KnnDtwClassifier(cfg, n_series=n_series).fit(train.rows, train.labels)


def knn_predict_proba(model, test):
    return model.predict_proba(test.rows)
