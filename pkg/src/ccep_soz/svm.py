"""Soft-margin SVM trained by sequential minimal optimization.

The solver works on the dual

    max_a  sum(a) - 1/2 a^T Q a,   Q_ij = y_i y_j k(x_i, x_j),
    s.t.   0 <= a_i <= C,  sum(a_i y_i) = 0,

updating two multipliers per step. The pair is the maximal violating pair
of the gradient ``G = Q a - 1``: ``i`` maximises ``-y_t G_t`` over the
indices that may still move up, ``j`` minimises it over those that may move
down. Training stops once the gap between the two is below ``tol / 2``,
which leaves every point within ``tol`` of its KKT condition.
"""
from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    ConvergenceWarning,
    DimMismatchError,
    InvalidConfigError,
    SingleClassError,
)

KERNELS = ("poly", "rbf")
_TAU = 1e-12
_CACHE_BYTES = 256 * 2**20


@dataclass(frozen=True)
class SvmConfig:
    kernel: str = "rbf"
    c: float = 1.0
    gamma: float | None = None
    degree: int = 5
    coef0: float = 1.0
    tol: float = 1e-3
    max_passes: int = 200
    train_subsample: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise InvalidConfigError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if not self.c > 0:
            raise InvalidConfigError("C must be > 0")
        if self.gamma is not None and not self.gamma > 0:
            raise InvalidConfigError("gamma must be > 0")
        if not self.tol > 0 or self.max_passes < 1:
            raise InvalidConfigError("tol must be > 0 and max_passes >= 1")


def kernel_matrix(kind, X, Z, gamma, degree=5, coef0=1.0):
    """Gram block ``k(X[i], Z[j])``."""
    if kind == "poly":
        return (gamma * (X @ Z.T) + coef0) ** degree
    if kind == "rbf":
        return np.exp(-gamma * cdist(X, Z, "sqeuclidean"))
    raise InvalidConfigError(f"unknown kernel {kind!r}")


def kernel_eval(kind, x, z, gamma, degree=5, coef0=1.0):
    """Single kernel value.

    Examples
    --------
    >>> kernel_eval("poly", [1.0], [1.0], gamma=1.0)
    32.0
    >>> round(kernel_eval("rbf", [0.0], [1.0], gamma=np.log(2)), 12)
    0.5
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if x.shape != z.shape or x.ndim != 1:
        raise DimMismatchError(f"kernel arguments differ in shape: {x.shape} vs {z.shape}")
    return float(kernel_matrix(kind, x[None], z[None], gamma, degree, coef0)[0, 0])


class _RowCache:
    """Least-recently-used cache of kernel rows ``k(X, X[i])``."""

    def __init__(self, X, kind, gamma, degree, coef0, capacity):
        self.X, self.kind, self.gamma, self.degree, self.coef0 = X, kind, gamma, degree, coef0
        self.capacity = max(2, capacity)
        self.rows = OrderedDict()
        if kind == "poly":
            self.diag = (gamma * np.einsum("ij,ij->i", X, X) + coef0) ** degree
        else:
            self.diag = np.ones(X.shape[0])

    def __getitem__(self, i):
        row = self.rows.get(i)
        if row is not None:
            self.rows.move_to_end(i)
            return row
        row = kernel_matrix(self.kind, self.X, self.X[i : i + 1], self.gamma,
                            self.degree, self.coef0)[:, 0]
        self.rows[i] = row
        if len(self.rows) > self.capacity:
            self.rows.popitem(last=False)
        return row


@dataclass
class SvmModel:
    """Fitted kernel machine.

    ``dual_coef`` holds ``a_i y_i`` for the support vectors only.
    """

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    b: float
    kernel: str
    gamma: float
    degree: int
    coef0: float
    alpha: np.ndarray
    converged: bool
    n_iter: int
    dual_trace: list = field(default_factory=list)

    def decision_function(self, X, chunk=2048):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.support_vectors.shape[1]:
            raise DimMismatchError(
                f"expected {self.support_vectors.shape[1]} columns, got {X.shape[-1]}"
            )
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], chunk):
            Kb = kernel_matrix(self.kernel, X[s : s + chunk], self.support_vectors,
                               self.gamma, self.degree, self.coef0)
            out[s : s + chunk] = Kb @ self.dual_coef + self.b
        return out

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)


def _as_signed(y):
    y = np.asarray(y)
    vals = set(np.unique(y).tolist())
    if vals <= {0, 1}:
        return np.where(y == 1, 1.0, -1.0)
    if vals <= {-1, 1}:
        return y.astype(np.float64)
    raise ValueError(f"labels must be 0/1 or -1/+1, got {sorted(vals)}")


def kkt_residual(alpha, margins, c):
    """Per-point violation of the KKT conditions given ``y_i f(x_i)``."""
    r = np.zeros_like(margins)
    at_zero = alpha <= 0
    at_c = alpha >= c
    free = ~(at_zero | at_c)
    r[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    r[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    r[free] = np.abs(margins[free] - 1.0)
    return r


def svm_fit(X, y, cfg=None):
    """Solve the dual by SMO and return an :class:`SvmModel`.

    ``y`` may be coded 0/1 or -1/+1. Hitting ``max_passes * n`` pair updates
    emits a :class:`ConvergenceWarning` and returns the current iterate with
    ``converged=False``.
    """
    cfg = cfg or SvmConfig()
    X = np.ascontiguousarray(X, dtype=np.float64)
    ys = _as_signed(y)
    n, d = X.shape
    if np.unique(ys).size < 2:
        raise SingleClassError("SVM training needs both classes")
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / d
    C = float(cfg.c)
    cache = _RowCache(X, cfg.kernel, gamma, cfg.degree, cfg.coef0, _CACHE_BYTES // (8 * n))
    diag = cache.diag

    alpha = np.zeros(n)
    G = -np.ones(n)
    eps = cfg.tol / 2
    dual_trace = [0.0]
    max_iter = cfg.max_passes * n
    converged = False
    it = 0
    while it < max_iter:
        up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
        low = ((ys > 0) & (alpha > 0)) | ((ys < 0) & (alpha < C))
        score = -ys * G
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] <= eps:
            converged = True
            break
        Ki, Kj = cache[i], cache[j]
        ai, aj = alpha[i], alpha[j]
        if ys[i] != ys[j]:
            quad = max(diag[i] + diag[j] - 2 * Ki[j], _TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = max(diag[i] + diag[j] - 2 * Ki[j], _TAU)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        di, dj = ai - alpha[i], aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        # Q[:, i] = y y_i K[:, i]
        G += ys * (ys[i] * di * Ki + ys[j] * dj * Kj)
        dual_trace.append(0.5 * float(alpha @ (1.0 - G)))
        it += 1

    score = -ys * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(score[free].mean())
    else:
        up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
        low = ((ys > 0) & (alpha > 0)) | ((ys < 0) & (alpha < C))
        hi = score[up].max() if up.any() else 0.0
        lo = score[low].min() if low.any() else 0.0
        b = float((hi + lo) / 2)
    if not converged:
        warnings.warn(f"SMO stopped after {it} updates without meeting tol={cfg.tol}",
                      ConvergenceWarning, stacklevel=2)
    sv = alpha > 0
    return SvmModel(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * ys)[sv],
        b=b,
        kernel=cfg.kernel,
        gamma=gamma,
        degree=cfg.degree,
        coef0=cfg.coef0,
        alpha=alpha,
        converged=converged,
        n_iter=it,
        dual_trace=dual_trace,
    )


class SvmClassifier:
    """Per-column z-scoring (fitted on training rows) followed by :func:`svm_fit`.

    ``predict_proba`` is deliberately absent: scores are raw margins.
    """

    def __init__(self, config=None):
        self.config = config or SvmConfig()

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        cap = self.config.train_subsample
        if cap is not None and X.shape[0] > cap:
            rng = np.random.default_rng(np.random.SeedSequence([int(self.config.seed), 0x5F]))
            keep = np.sort(rng.choice(X.shape[0], size=cap, replace=False))
            X, y = X[keep], y[keep]
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        self.model_ = svm_fit((X - self.mean_) / self.scale_, y, self.config)
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        return self.model_.decision_function((X - self.mean_) / self.scale_)

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)


def svm_decision(model, test):
    return model.decision_function(test.rows)
