import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ccep_soz.dataset import FeatureMatrix
from ccep_soz.errors import BandTooNarrowError, ColumnMismatchError, KTooLargeError, LengthMismatchError
from ccep_soz.knn import DtwConfig, KnnDtwClassifier, dtw, knn_fit, knn_predict_proba
from oracles import brute_dtw, brute_dtw_fast, brute_neighbours


def test_hand_example():
    a, b = [0.0, 0.0, 1.0], [0.0, 1.0, 1.0]
    assert dtw(a, b, None) == brute_dtw(a, b) == 0.0


def test_exhaustive_oracle_200_pairs(rng):
    for _ in range(200):
        n = int(rng.integers(1, 7))
        a, b = rng.normal(size=n), rng.normal(size=n)
        radius = None if rng.random() < 0.5 else int(rng.integers(0, n))
        assert abs(dtw(a, b, radius) - brute_dtw(a, b, radius)) <= 1e-9


series = arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e3, 1e3))


@settings(max_examples=100, deadline=None)
@given(series, st.integers(0, 50))
def test_identity(a, r):
    assert dtw(a, a, r) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-100, 100)),
    arrays(np.float64, n, elements=st.floats(-100, 100)))), st.integers(0, 50))
def test_symmetry_bounds_and_band_monotonicity(pair, r):
    a, b = pair
    d = dtw(a, b, r)
    assert d == pytest.approx(dtw(b, a, r), rel=1e-12, abs=1e-12)
    assert 0.0 <= d <= np.sum((a - b) ** 2) * (1 + 1e-12) + 1e-12
    assert dtw(a, b, r + 1) <= d * (1 + 1e-12) + 1e-12


def test_dtw_errors():
    with pytest.raises(LengthMismatchError):
        dtw([1.0, 2.0], [1.0])
    with pytest.raises(BandTooNarrowError):
        dtw([1.0], [1.0], -1)


def _fm(x, y, n_series):
    cols = [f"t{i:03d}" for i in range(n_series)] + [f"m{i}" for i in range(x.shape[1] - n_series)]
    return FeatureMatrix(x, y, ["P"] * len(y), cols)


def test_self_neighbour_k1(rng):
    x = rng.normal(size=(20, 12))
    y = rng.integers(0, 2, 20)
    model = knn_fit(_fm(x, y, 10), DtwConfig(k=1))
    p = knn_predict_proba(model, _fm(x, y, 10))
    np.testing.assert_array_equal(p[:, 1], y)


def test_three_class_one_neighbours():
    x = np.array([[0.0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [9, 9, 9], [8, 8, 8]])
    y = np.array([1, 1, 1, 0, 0])
    model = KnnDtwClassifier(DtwConfig(k=3), n_series=3).fit(x, y)
    np.testing.assert_array_equal(model.predict_proba(x[:1]), [[0.0, 1.0]])


def test_brute_force_neighbour_scan(rng):
    for trial in range(5):
        n, L, m = 50, 16, 3
        x = rng.normal(size=(n, L + m))
        y = rng.integers(0, 2, n)
        q = rng.normal(size=(10, L + m))
        cfg = DtwConfig(k=3, band_radius=4, meta_weight=0.7)
        model = KnnDtwClassifier(cfg, n_series=L).fit(x, y)
        idx, dist = model.kneighbors(q)
        proba = model.predict_proba(q)
        for t in range(q.shape[0]):
            want, wd = brute_neighbours(q[t], x, L, 4, 0.7, 3)
            np.testing.assert_array_equal(np.sort(idx[t]), np.sort(want))
            np.testing.assert_allclose(np.sort(dist[t]), np.sort(wd), rtol=1e-12)
            assert proba[t, 1] == pytest.approx(y[want].mean())


def test_dynamic_program_oracle_agrees_with_path_enumeration(rng):
    for _ in range(30):
        n = int(rng.integers(1, 6))
        a, b = rng.normal(size=n), rng.normal(size=n)
        assert brute_dtw_fast(a, b, 2) == pytest.approx(brute_dtw(a, b, 2), abs=1e-12)


def test_ties_prefer_lower_index():
    x = np.zeros((6, 4))
    y = np.array([0, 1, 1, 1, 0, 0])
    model = KnnDtwClassifier(DtwConfig(k=3), n_series=4).fit(x, y)
    idx, _ = model.kneighbors(np.zeros((1, 4)))
    assert sorted(idx[0].tolist()) == [0, 1, 2]


def test_probabilities_are_thirds(rng):
    x = rng.normal(size=(30, 8))
    y = rng.integers(0, 2, 30)
    p = KnnDtwClassifier(DtwConfig(k=3), n_series=8).fit(x, y).predict_proba(rng.normal(size=(15, 8)))
    assert np.all(np.isin(np.round(p * 3, 12), [0, 1, 2, 3]))
    np.testing.assert_allclose(p.sum(axis=1), 1.0)


def test_fit_stores_rows_and_checks_k(rng):
    x = rng.normal(size=(4, 5))
    model = KnnDtwClassifier(DtwConfig(k=3), n_series=5).fit(x, [0, 1, 0, 1])
    assert model.X_.shape[0] == 4
    with pytest.raises(KTooLargeError):
        KnnDtwClassifier(DtwConfig(k=5), n_series=5).fit(x, [0, 1, 0, 1])


def test_column_mismatch(rng):
    model = KnnDtwClassifier(DtwConfig(k=1), n_series=5).fit(rng.normal(size=(4, 6)), [0, 1, 0, 1])
    with pytest.raises(ColumnMismatchError):
        model.predict_proba(rng.normal(size=(2, 7)))


def test_train_subsample_caps_stored_rows(rng):
    x = rng.normal(size=(40, 5))
    model = KnnDtwClassifier(DtwConfig(k=1, train_subsample=10), n_series=5).fit(x, np.arange(40) % 2)
    assert model.X_.shape[0] == 10


def test_threaded_prediction_matches_serial(rng):
    x = rng.normal(size=(40, 12))
    y = rng.integers(0, 2, 40)
    q = rng.normal(size=(23, 12))
    cfg = DtwConfig(k=3, band_radius=3)
    serial = KnnDtwClassifier(cfg, n_series=10).fit(x, y).kneighbors(q)
    threaded = KnnDtwClassifier(cfg, n_series=10, n_jobs=4).fit(x, y).kneighbors(q)
    np.testing.assert_array_equal(serial[0], threaded[0])
    assert serial[1].tobytes() == threaded[1].tobytes()
