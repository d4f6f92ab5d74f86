"""CART and four tree ensembles built on it.

* :class:`RandomForest` - bootstrap + per-split feature subsampling, Gini.
* :class:`ExtraTrees` - no bootstrap, one uniform random threshold per
  candidate feature.
* :class:`GradientBoosting` - logistic loss, second-order (gradient/hessian)
  CART trees; with ``oblivious=True`` every level of a tree shares one
  (feature, threshold) pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

from . import _tree_kernels as K
from .errors import (
    EmptyInputError,
    InvalidConfigError,
    NonFiniteGradientError,
    SingleClassError,
)

EXACT_LIMIT = 10_000
MAX_BINS = 256
UNLIMITED_DEPTH = 1 << 30
# deeper boosting trees fall back to the plain grower (histogram pool too large)
SUBTRACTION_DEPTH = 12


def _config_from_dict(cls, data, aliases=None):
    data = dict(data)
    for src, dst in (aliases or {}).items():
        if src in data:
            data[dst] = data.pop(src)
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 100
    max_depth: int | None = 12
    mtry: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise InvalidConfigError("n_estimators must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidConfigError("max_depth must be >= 0")

    @classmethod
    def from_dict(cls, data):
        return _config_from_dict(cls, data)


@dataclass(frozen=True)
class BoostConfig:
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    reg_lambda: float = 1.0
    gamma: float = 0.0
    oblivious: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.learning_rate <= 1.0):
            raise InvalidConfigError("learning_rate must be in (0, 1]")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise InvalidConfigError("lambda and gamma must be >= 0")
        if self.n_estimators < 0 or self.max_depth < 0:
            raise InvalidConfigError("n_estimators and max_depth must be >= 0")

    @classmethod
    def from_dict(cls, data):
        return _config_from_dict(cls, data, aliases={"lambda": "reg_lambda", "eta": "learning_rate"})


class Binner:
    """Candidate thresholds and integer codes for every feature.

    Up to ``exact_limit`` rows the thresholds are the midpoints between
    consecutive unique values (exact greedy search). Above it, columns with
    more than ``max_bins`` distinct values get at most ``max_bins - 1``
    quantile thresholds instead; the others stay exact.
    """

    def __init__(self, exact_limit=EXACT_LIMIT, max_bins=MAX_BINS):
        self.exact_limit = exact_limit
        self.max_bins = max_bins

    def fit_transform(self, X):
        n, d = X.shape
        XT = np.ascontiguousarray(X.T)
        S = np.sort(XT, axis=1)
        if n > self.exact_limit:
            # linear-interpolated quantiles read straight off the sorted columns
            h = (n - 1) * np.arange(1, self.max_bins) / self.max_bins
            lo = np.floor(h).astype(np.int64)
            hi = np.minimum(lo + 1, n - 1)
            frac = h - lo
            Q = S[:, lo] + frac * (S[:, hi] - S[:, lo])
        n_unique = (S[:, 1:] != S[:, :-1]).sum(axis=1) + 1
        thresholds = []
        for f in range(d):
            col = S[f]
            if n <= self.exact_limit or n_unique[f] <= self.max_bins:
                u = col[np.concatenate([[True], col[1:] != col[:-1]])]
                t = u[:-1] + (u[1:] - u[:-1]) / 2.0
                # midpoint of adjacent floats can round down onto u[:-1]
                bad = t <= u[:-1]
                t[bad] = u[1:][bad]
            else:
                t = np.unique(Q[f])
                t = t[t > col[0]]
            thresholds.append(t)
        m = max((len(t) for t in thresholds), default=0)
        T = np.full((d, max(m, 1)), np.inf)
        nthr = np.zeros(d, dtype=np.int64)
        codes = np.empty((d, n), dtype=np.int32)
        for f, t in enumerate(thresholds):
            T[f, : len(t)] = t
            nthr[f] = len(t)
            codes[f] = np.searchsorted(t, XT[f], side="right")
        self.T_, self.nthr_ = T, nthr
        return codes


@dataclass
class DecisionTree:
    """Flat-array tree; see :mod:`ccep_soz._tree_kernels` for the layout."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def apply(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return K.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict_value(self, X):
        return self.value[self.apply(X)]

    def node_depths(self):
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return depth

    @property
    def max_depth(self):
        leaves = self.feature < 0
        return int(self.node_depths()[leaves].max())

    def level_splits(self):
        """``{depth: {(feature, threshold), ...}}`` over internal nodes."""
        out = {}
        for i, dep in enumerate(self.node_depths()):
            if self.feature[i] >= 0:
                out.setdefault(int(dep), set()).add((int(self.feature[i]), float(self.threshold[i])))
        return out


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInputError("need at least one training row")
    if y is not None:
        y = np.asarray(y, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise ValueError("X and y disagree in length")
    return X, y


def _grow(X, codes, binner, stats, rows, mode, max_depth, mtry, extra, lam, gamma, seed):
    row_leaf = np.full(X.shape[0], -1, dtype=np.int64)
    depth = UNLIMITED_DEPTH if max_depth is None else int(max_depth)
    arrays = K.grow_tree(
        codes, X, binner.T_, binner.nthr_, stats, rows.astype(np.int64).copy(), row_leaf,
        mode, depth, int(mtry), bool(extra), float(lam), float(gamma), np.uint64(seed),
    )
    return DecisionTree(*arrays), row_leaf


def _dummy_binner(d):
    b = Binner()
    b.T_ = np.zeros((d, 1))
    b.nthr_ = np.zeros(d, dtype=np.int64)
    return b, np.zeros((d, 1), dtype=np.int32)


def fit_cart(X, y=None, *, grad=None, hess=None, max_depth=None, reg_lambda=1.0, gamma=0.0,
             mtry=None, extra=False, sample_weight=None, seed=0):
    """Grow a single CART tree.

    Pass ``y`` for a Gini classification tree (leaves hold class
    frequencies) or ``grad``/``hess`` for a boosting tree (leaves hold
    ``-G / (H + lambda)``).
    """
    X, y = _check_xy(X, y)
    n, d = X.shape
    if grad is not None:
        mode = K.NEWTON
        stats = np.column_stack([np.asarray(grad, float), np.asarray(hess, float)])
    else:
        if y is None:
            raise ValueError("need labels or gradient pairs")
        mode = K.GINI
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, float)
        stats = np.column_stack([w * (y == 0), w * (y == 1)])
    rows = np.arange(n) if sample_weight is None else np.nonzero(np.asarray(sample_weight) > 0)[0]
    if extra:
        binner, codes = _dummy_binner(d)
    else:
        binner = Binner()
        codes = binner.fit_transform(X)
    tree, _ = _grow(X, codes, binner, np.ascontiguousarray(stats), rows, mode, max_depth,
                    d if mtry is None else mtry, extra, reg_lambda, gamma, seed)
    return tree


class _Packed:
    def __init__(self, trees):
        sizes = [t.n_nodes for t in trees]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        if trees:
            self.feature = np.concatenate([t.feature for t in trees])
            self.threshold = np.concatenate([t.threshold for t in trees])
            self.left = np.concatenate([t.left for t in trees])
            self.right = np.concatenate([t.right for t in trees])
            self.value = np.ascontiguousarray(np.concatenate([t.value for t in trees]))
        else:
            self.feature = np.full(1, -1, dtype=np.int32)
            self.threshold = np.zeros(1)
            self.left = self.right = np.full(1, -1, dtype=np.int32)
            self.value = np.zeros((1, 2))

    def sum(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return K.predict_forest(X, self.feature, self.threshold, self.left, self.right,
                                self.value, self.offsets)


class _Forest:
    extra = False

    def __init__(self, config=None):
        self.config = config or ForestConfig(bootstrap=not self.extra)

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        if np.unique(y).size < 2:
            raise SingleClassError("forest training needs both classes")
        cfg = self.config
        n, d = X.shape
        mtry = cfg.mtry or math.ceil(math.sqrt(d))
        if self.extra:
            binner, codes = _dummy_binner(d)
        else:
            binner = Binner()
            codes = binner.fit_transform(X)
        onehot = np.column_stack([(y == 0), (y == 1)]).astype(np.float64)
        self.trees_ = []
        for t in range(cfg.n_estimators):
            rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), t]))
            if cfg.bootstrap:
                w = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
            else:
                w = np.ones(n)
            stats = np.ascontiguousarray(onehot * w[:, None])
            rows = np.nonzero(w > 0)[0]
            tree, _ = _grow(X, codes, binner, stats, rows, K.GINI, cfg.max_depth, mtry,
                            self.extra, 0.0, 0.0, int(rng.integers(0, 2**63)))
            self.trees_.append(tree)
        self._packed = _Packed(self.trees_)
        self.n_features_ = d
        return self

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n_features_:
            raise ValueError(f"expected {self.n_features_} columns, got {X.shape[1]}")
        p = self._packed.sum(X) / len(self.trees_)
        # renormalise away accumulated rounding so rows sum to one
        return p / p.sum(axis=1, keepdims=True)


class RandomForest(_Forest):
    extra = False


class ExtraTrees(_Forest):
    extra = True


def logistic_loss(y, F):
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


class GradientBoosting:
    """Second-order boosting of the logistic loss.

    ``F_0`` is the prior log-odds; each round fits a tree to the gradient
    ``sigmoid(F) - y`` and hessian ``sigmoid(F)(1 - sigmoid(F))`` and adds
    ``learning_rate`` times its leaf weights. ``loss_trace_`` records the
    training loss before the first round and after every round.
    """

    def __init__(self, config=None):
        self.config = config or BoostConfig()

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        if np.unique(y).size < 2:
            raise SingleClassError("boosting needs both classes")
        cfg = self.config
        n, d = X.shape
        binner = Binner()
        codes = binner.fit_transform(X)
        order = np.zeros((d, 1), dtype=np.int64)
        widest = int(binner.nthr_.max()) if d else 0
        if cfg.oblivious and cfg.max_depth > 0 and (1 << (cfg.max_depth - 1)) * (widest + 1) > n:
            order = np.argsort(codes, axis=1, kind="stable")
        p = float(y.mean())
        self.base_score_ = math.log(p / (1.0 - p))
        F = np.full(n, self.base_score_)
        yf = y.astype(np.float64)
        self.trees_ = []
        self.loss_trace_ = [logistic_loss(yf, F)]
        rows = np.arange(n)
        for t in range(cfg.n_estimators):
            prob = expit(F)
            g = prob - yf
            h = prob * (1.0 - prob)
            if not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
                raise NonFiniteGradientError(f"non-finite gradient in round {t}")
            if cfg.oblivious:
                row_leaf = np.empty(n, dtype=np.int64)
                arrays = K.grow_oblivious(codes, binner.T_, binner.nthr_, order, g, h,
                                          row_leaf, int(cfg.max_depth), float(cfg.reg_lambda),
                                          float(cfg.gamma))
                tree = DecisionTree(*arrays)
            elif cfg.max_depth <= SUBTRACTION_DEPTH:
                stats = np.ascontiguousarray(np.column_stack([g, h]))
                row_leaf = np.empty(n, dtype=np.int64)
                arrays = K.grow_boost_tree(codes, binner.T_, binner.nthr_, stats, rows.copy(),
                                           row_leaf, int(cfg.max_depth), float(cfg.reg_lambda),
                                           float(cfg.gamma))
                tree = DecisionTree(*arrays)
            else:
                stats = np.ascontiguousarray(np.column_stack([g, h]))
                tree, row_leaf = _grow(X, codes, binner, stats, rows, K.NEWTON, cfg.max_depth,
                                       d, False, cfg.reg_lambda, cfg.gamma, 0)
            F = F + cfg.learning_rate * tree.value[row_leaf, 0]
            self.trees_.append(tree)
            self.loss_trace_.append(logistic_loss(yf, F))
        self._packed = _Packed(self.trees_)
        self.n_features_ = d
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n_features_:
            raise ValueError(f"expected {self.n_features_} columns, got {X.shape[1]}")
        return self.base_score_ + self.config.learning_rate * self._packed.sum(X)[:, 0]

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])


def fit_random_forest(train, cfg=None):
    return RandomForest(cfg).fit(train.rows, train.labels)


def fit_extra_trees(train, cfg=None):
    return ExtraTrees(cfg).fit(train.rows, train.labels)


def fit_gbdt(train, cfg=None):
    return GradientBoosting(cfg).fit(train.rows, train.labels)
