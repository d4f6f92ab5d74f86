import warnings

import numpy as np
import pytest

from ccep_soz.errors import ConvergenceWarning, DimMismatchError, InvalidConfigError, SingleClassError
from ccep_soz.svm import SvmClassifier, SvmConfig, kernel_eval, kernel_matrix, kkt_residual, svm_fit


def _margins(model, X, y):
    ys = np.where(np.asarray(y) == 1, 1.0, -1.0)
    return ys * model.decision_function(X)


def test_kernel_values(rng):
    assert kernel_eval("poly", [1.0], [1.0], gamma=1.0) == 32.0
    assert kernel_eval("rbf", [0.0], [1.0], gamma=np.log(2)) == pytest.approx(0.5, abs=1e-15)
    x = rng.normal(size=7)
    assert kernel_eval("rbf", x, x, gamma=3.3) == 1.0
    K = kernel_matrix("rbf", rng.normal(size=(5, 3)), rng.normal(size=(4, 3)), 0.5)
    assert np.all((K > 0) & (K <= 1))


def test_kernel_dimension_mismatch():
    with pytest.raises(DimMismatchError):
        kernel_eval("rbf", [0.0, 1.0], [1.0], gamma=1.0)


def test_two_point_dual_by_hand():
    X = np.array([[-1.0], [1.0]])
    y = np.array([-1, 1])
    m = svm_fit(X, y, SvmConfig(kernel="poly", degree=1, gamma=1.0, coef0=0.0, c=1e6))
    np.testing.assert_allclose(m.alpha, [0.5, 0.5], atol=1e-12)
    assert m.b == pytest.approx(0.0, abs=1e-12)
    grid = np.linspace(-3, 3, 13)[:, None]
    np.testing.assert_allclose(m.decision_function(grid), grid[:, 0], atol=1e-12)


def test_contradictory_duplicates_hit_the_box():
    X = np.array([[0.5], [0.5]])
    m = svm_fit(X, [0, 1], SvmConfig(kernel="rbf", gamma=1.0, c=0.1))
    np.testing.assert_allclose(m.alpha, [0.1, 0.1])


@pytest.mark.parametrize("kernel", ["rbf", "poly"])
def test_kkt_residual_within_tol(kernel):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(100, 4))
        y = (X[:, 0] + 0.5 * rng.normal(size=100) > 0).astype(int)
        cfg = SvmConfig(kernel=kernel, c=1.0, tol=1e-3, degree=3 if kernel == "poly" else 5)
        m = svm_fit(X, y, cfg)
        assert m.converged
        r = kkt_residual(m.alpha, _margins(m, X, y), cfg.c)
        worst = max(worst, r.max())
        assert np.all((m.alpha >= 0) & (m.alpha <= cfg.c))
        assert abs(np.sum(m.alpha * np.where(y == 1, 1, -1))) < 1e-8
        assert np.all(np.diff(m.dual_trace) >= -1e-12)
    assert worst <= 1e-3


def test_separable_large_c(rng):
    X = np.vstack([rng.normal(-2, 0.5, size=(50, 2)), rng.normal(2, 0.5, size=(50, 2))])
    y = np.r_[np.zeros(50, int), np.ones(50, int)]
    m = svm_fit(X, y, SvmConfig(kernel="rbf", c=1e6, gamma=0.5))
    assert np.mean(m.predict(X) == y) == 1.0


def test_rbf_scale_invariance(rng):
    X = rng.normal(size=(80, 3))
    y = (np.sin(X[:, 0]) + X[:, 1] > 0).astype(int)
    Q = rng.normal(size=(40, 3))
    c = 7.0
    a = svm_fit(X, y, SvmConfig(kernel="rbf", gamma=0.4))
    b = svm_fit(c * X, y, SvmConfig(kernel="rbf", gamma=0.4 / c**2))
    np.testing.assert_array_equal(a.predict(Q), b.predict(c * Q))


def test_zero_score_is_class_zero():
    X = np.array([[-1.0], [1.0]])
    m = svm_fit(X, [0, 1], SvmConfig(kernel="poly", degree=1, gamma=1.0, coef0=0.0, c=10.0))
    assert m.predict(np.array([[0.0]]))[0] == 0


def test_iteration_cap_warns(rng):
    X = rng.normal(size=(60, 3))
    y = rng.integers(0, 2, 60)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        m = svm_fit(X, y, SvmConfig(kernel="rbf", c=100.0, max_passes=1, tol=1e-9))
    assert not m.converged
    assert any(issubclass(w.category, ConvergenceWarning) for w in caught)


def test_errors():
    with pytest.raises(SingleClassError):
        svm_fit(np.zeros((3, 2)), [1, 1, 1])
    with pytest.raises(InvalidConfigError):
        SvmConfig(c=0.0)
    with pytest.raises(InvalidConfigError):
        SvmConfig(kernel="linear")


def test_classifier_standardises_and_subsamples(rng):
    X = rng.normal(size=(300, 4)) * np.array([1e3, 1.0, 1e-3, 50.0])
    y = (X[:, 0] / 1e3 + X[:, 1] > 0).astype(int)
    clf = SvmClassifier(SvmConfig(kernel="poly", train_subsample=120)).fit(X, y)
    assert clf.model_.alpha.shape == (120,)
    assert np.mean(clf.predict(X) == y) > 0.85
