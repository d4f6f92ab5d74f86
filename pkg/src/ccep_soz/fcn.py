"""Fully convolutional 1-D network in plain numpy.

Architecture: three blocks of ``conv -> batch norm -> ReLU`` with kernel
sizes (7, 5, 3) and same padding, then global average pooling over time and
a dense layer to two logits. Activations are channels-last, ``(batch,
length, channels)``; convolution is an im2col matrix product.

Inputs are rescaled before the first layer using training statistics: the
series columns share one mean and standard deviation (so the waveform shape
is untouched) while every trailing metadata column gets its own. The
metadata block is then multiplied by ``meta_gain``: global average pooling
weighs each position by ``1/L``, so a handful of unit-scale trailing samples
would otherwise be swamped by the series. The default gain, ``n_series /
n_meta``, gives the block the same total weight as the series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    DivergedLossError,
    InvalidConfigError,
    ShapeMismatchError,
    SingleClassError,
)

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
VARIANT_LENGTHS = {"TS": 495, "TSM": 502}


@dataclass(frozen=True)
class FcnConfig:
    filters: tuple = (64, 64, 64)
    kernel_sizes: tuple = (7, 5, 3)
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    variant: str = "TS"
    train_subsample: int | None = None
    dtype: str = "float32"
    meta_gain: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        if len(self.filters) != 3 or len(self.kernel_sizes) != 3:
            raise InvalidConfigError("the network has exactly three conv blocks")
        if any(k % 2 == 0 for k in self.kernel_sizes):
            raise InvalidConfigError("same padding needs odd kernel sizes")
        if self.variant not in VARIANT_LENGTHS:
            raise InvalidConfigError(f"variant must be TS or TSM, got {self.variant!r}")
        if not self.lr > 0 or self.epochs < 0 or self.batch_size < 1:
            raise InvalidConfigError("need lr > 0, epochs >= 0, batch_size >= 1")
        if self.dtype not in ("float32", "float64"):
            raise InvalidConfigError("dtype must be float32 or float64")
        if self.meta_gain is not None and not self.meta_gain > 0:
            raise InvalidConfigError("meta_gain must be positive")


def init_params(filters, kernel_sizes, rng, dtype=np.float64):
    """Kaiming-uniform (fan-in) weights, unit BN scale, zero shifts."""
    params = {}
    c_in = 1
    for i, (c_out, k) in enumerate(zip(filters, kernel_sizes), start=1):
        bound = math.sqrt(6.0 / (k * c_in))
        params[f"W{i}"] = rng.uniform(-bound, bound, size=(k, c_in, c_out)).astype(dtype)
        params[f"gamma{i}"] = np.ones(c_out, dtype=dtype)
        params[f"beta{i}"] = np.zeros(c_out, dtype=dtype)
        c_in = c_out
    bound = math.sqrt(6.0 / c_in)
    params["Wd"] = rng.uniform(-bound, bound, size=(c_in, 2)).astype(dtype)
    params["bd"] = np.zeros(2, dtype=dtype)
    return params


def init_bn_state(filters, dtype=np.float64):
    state = {}
    for i, c in enumerate(filters, start=1):
        state[f"mean{i}"] = np.zeros(c, dtype=dtype)
        state[f"var{i}"] = np.ones(c, dtype=dtype)
    return state


def _im2col(x, k):
    """``(b, L, c)`` -> ``(b * L, k * c)`` windows under same padding."""
    b, L, c = x.shape
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (b, L, c, k)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(b * L, k * c)


def _conv_input_grad(dz, W, b, L):
    """Input gradient of a same-padded conv: correlate ``dz`` with the flipped kernel."""
    k, c_in, c_out = W.shape
    wflip = np.ascontiguousarray(W[::-1].transpose(0, 2, 1)).reshape(k * c_out, c_in)
    return _im2col(dz.reshape(b, L, c_out), k) @ wflip


@numba.njit(cache=True, nogil=True)
def _bn_relu_forward(z, mu, var, gamma, beta, training):
    n, c = z.shape
    if training:
        acc = np.zeros(c)
        for i in range(n):
            for j in range(c):
                acc[j] += z[i, j]
        for j in range(c):
            mu[j] = acc[j] / n
            acc[j] = 0.0
        for i in range(n):
            for j in range(c):
                dv = z[i, j] - mu[j]
                acc[j] += dv * dv
        for j in range(c):
            var[j] = acc[j] / n
    inv = np.empty(c, dtype=z.dtype)
    for j in range(c):
        inv[j] = 1.0 / np.sqrt(var[j] + BN_EPS)
    zhat = np.empty_like(z)
    a = np.empty_like(z)
    for i in range(n):
        for j in range(c):
            zh = (z[i, j] - mu[j]) * inv[j]
            zhat[i, j] = zh
            v = gamma[j] * zh + beta[j]
            a[i, j] = v if v > 0 else 0.0
    return zhat, a, inv


@numba.njit(cache=True, nogil=True)
def _bn_relu_backward(dh, zhat, a, gamma, inv):
    n, c = dh.shape
    sg = np.zeros(c)
    sb = np.zeros(c)
    da = np.empty_like(dh)
    for i in range(n):
        for j in range(c):
            v = dh[i, j] if a[i, j] > 0 else 0.0
            da[i, j] = v
            sg[j] += v * zhat[i, j]
            sb[j] += v
    c1 = np.empty(c, dtype=dh.dtype)
    c2 = np.empty(c, dtype=dh.dtype)
    c3 = np.empty(c, dtype=dh.dtype)
    for j in range(c):
        s = inv[j] * gamma[j]
        c1[j] = s
        c2[j] = s * sb[j] / n
        c3[j] = s * sg[j] / n
    for i in range(n):
        for j in range(c):
            da[i, j] = c1[j] * da[i, j] - c2[j] - c3[j] * zhat[i, j]
    return da, sg.astype(dh.dtype), sb.astype(dh.dtype)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_input(params, x):
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] != params["W1"].shape[1]:
        raise ShapeMismatchError(f"expected (batch, length[, 1]) input, got {np.shape(x)}")
    return x.astype(params["W1"].dtype, copy=False)


def fcn_forward(params, x, state=None, training=False, cache=None):
    """Class probabilities for a batch.

    With ``training=False`` batch norm uses ``state`` (running statistics);
    with ``training=True`` it uses batch statistics and, when ``cache`` is a
    dict, stores what the backward pass needs.
    """
    h = _check_input(params, x)
    b, L, _ = h.shape
    n_blocks = sum(1 for key in params if key.startswith("W") and key != "Wd")
    for i in range(1, n_blocks + 1):
        W = params[f"W{i}"]
        k, c_in, c_out = W.shape
        col = _im2col(h, k)
        z = col @ W.reshape(k * c_in, c_out)
        if training:
            mu = np.empty(c_out, dtype=z.dtype)
            var = np.empty(c_out, dtype=z.dtype)
        else:
            mu = state[f"mean{i}"].astype(z.dtype)
            var = state[f"var{i}"].astype(z.dtype)
        zhat, a, inv = _bn_relu_forward(z, mu, var, params[f"gamma{i}"], params[f"beta{i}"],
                                        training)
        if cache is not None:
            cache[i] = (col, zhat, inv, a, mu, var)
        h = a.reshape(b, L, c_out)
    pooled = h.mean(axis=1)
    logits = pooled @ params["Wd"] + params["bd"]
    if cache is not None:
        cache["pooled"] = pooled
        cache["shape"] = (b, L)
    return softmax(logits)


def loss_and_grads(params, x, y):
    """Mean cross-entropy and its gradient (training-mode batch norm).

    Returns ``(loss, grads, batch_stats)`` where ``batch_stats`` maps
    ``mean{i}``/``var{i}`` to the statistics used in the forward pass.
    """
    y = np.asarray(y, dtype=np.int64)
    cache = {}
    probs = fcn_forward(params, x, training=True, cache=cache)
    b, L = cache["shape"]
    p_true = probs[np.arange(b), y]
    loss = float(-np.mean(np.log(np.maximum(p_true, np.finfo(probs.dtype).tiny))))

    grads = {}
    dlogits = probs.copy()
    dlogits[np.arange(b), y] -= 1
    dlogits /= b
    grads["Wd"] = cache["pooled"].T @ dlogits
    grads["bd"] = dlogits.sum(axis=0)
    dpooled = dlogits @ params["Wd"].T
    n_blocks = len([key for key in cache if isinstance(key, int)])
    c_last = dpooled.shape[1]
    dh = np.broadcast_to(dpooled[:, None, :] / L, (b, L, c_last)).reshape(b * L, c_last)
    stats = {}
    for i in range(n_blocks, 0, -1):
        col, zhat, inv, a, mu, var = cache[i]
        stats[f"mean{i}"], stats[f"var{i}"] = mu, var
        W = params[f"W{i}"]
        k, c_in, c_out = W.shape
        dz, grads[f"gamma{i}"], grads[f"beta{i}"] = _bn_relu_backward(
            np.ascontiguousarray(dh), zhat, a, params[f"gamma{i}"], inv)
        grads[f"W{i}"] = (col.T @ dz).reshape(k, c_in, c_out)
        if i > 1:
            dh = _conv_input_grad(dz, W, b, L)
    return loss, grads, stats


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for key, g in grads.items():
            m, v = self.m[key], self.v[key]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[key] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(
                params[key].dtype, copy=False)


def gradient_check(params, x, y, eps=1e-4, max_per_tensor=None, rng=None):
    """Relative error between analytic and central-difference gradients.

    Returns a flat array with one entry per checked parameter entry, using
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    _, grads, _ = loss_and_grads(params, x, y)
    errors = []
    for key, p in params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_per_tensor, replace=False)
        ga = grads[key].reshape(-1)
        for j in idx:
            old = flat[j]
            flat[j] = old + eps
            lp = loss_and_grads(params, x, y)[0]
            flat[j] = old - eps
            lm = loss_and_grads(params, x, y)[0]
            flat[j] = old
            num = (lp - lm) / (2 * eps)
            errors.append(abs(ga[j] - num) / max(abs(ga[j]), abs(num), 1e-8))
    return np.asarray(errors)


@dataclass
class _Scaler:
    n_series: int
    meta_gain: float | None = None
    mean: np.ndarray = field(default=None)
    scale: np.ndarray = field(default=None)

    def fit(self, X):
        s = X[:, : self.n_series]
        m = X[:, self.n_series:]
        sd = s.std()
        msd = m.std(axis=0)
        self.mean = np.concatenate([np.full(self.n_series, s.mean()), m.mean(axis=0)])
        gain = self.meta_gain
        if gain is None:
            gain = self.n_series / m.shape[1] if m.shape[1] else 1.0
        self.scale = np.concatenate([np.full(self.n_series, sd if sd > 0 else 1.0),
                                     np.where(msd > 0, msd, 1.0) / gain])
        return self

    def transform(self, X):
        return (X - self.mean) / self.scale


class FcnClassifier:
    """Train the network by Adam on mini-batches of shuffled rows.

    Parameters
    ----------
    config : FcnConfig
    n_series : int, optional
        Leading columns that belong to the time series (for input scaling).
        Defaults to all columns.
    """

    def __init__(self, config=None, n_series=None):
        self.config = config or FcnConfig()
        self.n_series = n_series

    def fit(self, X, y):
        cfg = self.config
        dtype = np.dtype(cfg.dtype)
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if np.unique(y).size < 2:
            raise SingleClassError("FCN training needs both classes")
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0xFC]))
        if cfg.train_subsample is not None and X.shape[0] > cfg.train_subsample:
            keep = np.sort(rng.choice(X.shape[0], size=cfg.train_subsample, replace=False))
            X, y = X[keep], y[keep]
        self.scaler_ = _Scaler(X.shape[1] if self.n_series is None else self.n_series,
                               cfg.meta_gain).fit(X)
        Xs = self.scaler_.transform(X).astype(dtype)
        self.n_features_ = X.shape[1]
        self.params_ = init_params(cfg.filters, cfg.kernel_sizes, rng, dtype)
        self.state_ = init_bn_state(cfg.filters, dtype)
        opt = Adam(self.params_, lr=cfg.lr)
        self.loss_history_ = []
        n = Xs.shape[0]
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            total = 0.0
            for s in range(0, n, cfg.batch_size):
                bi = order[s : s + cfg.batch_size]
                if bi.size < 2:
                    # batch norm needs at least two rows
                    continue
                loss, grads, stats = loss_and_grads(self.params_, Xs[bi], y[bi])
                if not math.isfinite(loss):
                    raise DivergedLossError(f"non-finite loss in epoch {epoch}")
                opt.step(self.params_, grads)
                for key, val in stats.items():
                    run = self.state_[key]
                    run *= BN_MOMENTUM
                    run += (1 - BN_MOMENTUM) * val
                total += loss * bi.size
            self.loss_history_.append(total / n)
        return self

    def predict_proba(self, X, chunk=1024):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise ShapeMismatchError(f"expected {self.n_features_} columns, got {np.shape(X)}")
        Xs = self.scaler_.transform(X).astype(self.params_["W1"].dtype)
        out = np.empty((X.shape[0], 2))
        for s in range(0, X.shape[0], chunk):
            out[s : s + chunk] = fcn_forward(self.params_, Xs[s : s + chunk], self.state_)
        return out


def fcn_train(train, cfg=None):
    """Fit on a FeatureMatrix whose width must match the configured variant."""
    cfg = cfg or FcnConfig()
    want = VARIANT_LENGTHS[cfg.variant]
    if train.d != want:
        raise ShapeMismatchError(f"{cfg.variant} expects {want} input samples, got {train.d}")
    return FcnClassifier(cfg, n_series=VARIANT_LENGTHS["TS"]).fit(train.rows, train.labels)
