import numpy as np
import pytest

from ccep_soz.dataset import FeatureMatrix
from ccep_soz.errors import InvalidConfigError, ShapeMismatchError, SingleClassError
from ccep_soz.fcn import (
    FcnClassifier,
    FcnConfig,
    VARIANT_LENGTHS,
    fcn_forward,
    fcn_train,
    gradient_check,
    init_bn_state,
    init_params,
    loss_and_grads,
    softmax,
)


def _separable(rng, n=400, L=60):
    y = rng.integers(0, 2, n)
    t = np.arange(L)
    bump = np.exp(-0.5 * ((t - L / 3) / 4.0) ** 2)
    X = rng.normal(0, 1.0, size=(n, L)) + 3.0 * y[:, None] * bump
    return X, y


def test_gradient_check_reduced_net(rng):
    params = init_params((8, 8, 8), (7, 5, 3), rng)
    x = rng.normal(size=(4, 20, 1))
    y = np.array([0, 1, 1, 0])
    err = gradient_check(params, x, y, eps=1e-4)
    n_params = sum(p.size for p in params.values())
    assert err.size == n_params
    assert np.mean(err <= 1e-3) >= 0.99


def test_symmetric_logits_give_one_half():
    params = init_params((4, 4, 4), (7, 5, 3), np.random.default_rng(0))
    for key in params:
        if key.startswith("W") or key in ("bd",):
            params[key][...] = 0.0
    p = fcn_forward(params, np.zeros((3, 495)), init_bn_state((4, 4, 4)))
    np.testing.assert_allclose(p, 0.5)


def test_output_shape_and_softmax(rng):
    params = init_params((8, 8, 8), (7, 5, 3), rng)
    p = fcn_forward(params, rng.normal(size=(8, 495)), init_bn_state((8, 8, 8)))
    assert p.shape == (8, 2)
    assert np.all((p > 0) & (p < 1))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_same_padding_keeps_length(rng):
    params = init_params((4, 5, 6), (7, 5, 3), rng)
    cache = {}
    fcn_forward(params, rng.normal(size=(2, 33)), training=True, cache=cache)
    for i, c in zip((1, 2, 3), (4, 5, 6)):
        assert cache[i][3].shape == (2 * 33, c)


def test_pooling_a_constant_map():
    params = init_params((2, 2, 2), (1, 1, 1), np.random.default_rng(0))
    for i in (1, 2, 3):
        params[f"W{i}"][...] = 0.0
        params[f"beta{i}"][...] = 2.5
    params["Wd"][...] = np.array([[1.0, 0.0], [0.0, 0.0]])
    cache = {}
    fcn_forward(params, np.ones((1, 9)), init_bn_state((2, 2, 2)), cache=cache)
    np.testing.assert_allclose(cache["pooled"], 2.5)


def test_softmax_stable():
    p = softmax(np.array([[1000.0, 0.0], [-1000.0, -1000.0]]))
    np.testing.assert_allclose(p, [[1.0, 0.0], [0.5, 0.5]])


def test_loss_decreases_over_five_epochs():
    rng = np.random.default_rng(400)
    X, y = _separable(rng)
    clf = FcnClassifier(FcnConfig(filters=(8, 8, 8), epochs=6, batch_size=32, lr=3e-3, seed=1))
    clf.fit(X, y)
    assert len(clf.loss_history_) == 6
    assert clf.loss_history_[5] < clf.loss_history_[0]


def test_prediction_is_pure_and_deterministic():
    rng = np.random.default_rng(1)
    X, y = _separable(rng, 120, 30)
    cfg = FcnConfig(filters=(4, 4, 4), epochs=2, batch_size=16, seed=3)
    a = FcnClassifier(cfg).fit(X, y)
    b = FcnClassifier(cfg).fit(X, y)
    pa = a.predict_proba(X)
    assert pa.tobytes() == a.predict_proba(X).tobytes()
    assert pa.tobytes() == b.predict_proba(X).tobytes()


def test_variant_lengths():
    assert VARIANT_LENGTHS == {"TS": 495, "TSM": 502}


def test_train_checks_variant_width(small_matrix):
    with pytest.raises(ShapeMismatchError):
        fcn_train(small_matrix, FcnConfig(variant="TS", epochs=0))
    model = fcn_train(small_matrix, FcnConfig(variant="TSM", filters=(4, 4, 4), epochs=1))
    assert model.predict_proba(small_matrix.rows).shape == (small_matrix.n, 2)
    series = small_matrix.series_only()
    assert fcn_train(series, FcnConfig(variant="TS", filters=(4, 4, 4), epochs=1)).n_features_ == 495


def test_forward_rejects_bad_shape(rng):
    params = init_params((4, 4, 4), (7, 5, 3), rng)
    with pytest.raises(ShapeMismatchError):
        fcn_forward(params, np.zeros((2, 10, 3)), init_bn_state((4, 4, 4)))


def test_errors():
    with pytest.raises(InvalidConfigError):
        FcnConfig(kernel_sizes=(7, 4, 3))
    with pytest.raises(SingleClassError):
        FcnClassifier(FcnConfig(epochs=1)).fit(np.zeros((4, 10)), np.zeros(4, int))


def test_loss_is_cross_entropy(rng):
    params = init_params((4, 4, 4), (3, 3, 3), rng)
    x = rng.normal(size=(5, 12))
    y = np.array([0, 1, 1, 0, 1])
    loss, _, _ = loss_and_grads(params, x, y)
    p = fcn_forward(params, x, training=True)
    assert loss == pytest.approx(-np.mean(np.log(p[np.arange(5), y])))


def test_input_scaling_and_metadata_gain(rng):
    X = np.hstack([rng.normal(5.0, 3.0, size=(200, 40)), rng.normal(2.0, 0.5, size=(200, 4))])
    y = np.arange(200) % 2
    cfg = FcnConfig(filters=(4, 4, 4), epochs=0)
    Xs = FcnClassifier(cfg, n_series=40).fit(X, y).scaler_.transform(X)
    # one shared scale over the series keeps per-row waveform shape
    assert Xs[:, :40].mean() == pytest.approx(0.0, abs=1e-12)
    assert Xs[:, :40].std() == pytest.approx(1.0)
    assert np.allclose(Xs[:, :40] * X[:, :40].std(), X[:, :40] - X[:, :40].mean())
    # metadata columns are z-scored, then lifted by n_series / n_meta
    assert np.allclose(Xs[:, 40:].std(axis=0), 10.0)
    explicit = FcnClassifier(FcnConfig(filters=(4, 4, 4), epochs=0, meta_gain=1.0), n_series=40)
    assert np.allclose(explicit.fit(X, y).scaler_.transform(X)[:, 40:].std(axis=0), 1.0)
    with pytest.raises(InvalidConfigError):
        FcnConfig(meta_gain=0.0)
