import math

import numpy as np
import pytest

from ccep_soz.dataset import FeatureMatrix
from ccep_soz.errors import TooFewPatientsError, TooManySplitsRequestedError, UnassignedPatientError
from ccep_soz.splits import Split, SplitPlan, assert_disjoint, make_splits, partition

PATIENTS = [f"P{i}" for i in range(1, 8)]


def test_seven_distinct_four_three_partitions():
    plan = make_splits(PATIENTS, 7, seed=0)
    assert len(plan) == 7
    assert len({s.train_patients for s in plan}) == 7
    for s in plan:
        assert len(s.train_patients) == 4 and len(s.test_patients) == 3
        assert s.train_patients | s.test_patients == set(PATIENTS)
        assert not s.train_patients & s.test_patients


def test_all_thirty_five_available_but_no_more():
    assert len(make_splits(PATIENTS, math.comb(7, 4), seed=1)) == 35
    with pytest.raises(TooManySplitsRequestedError):
        make_splits(PATIENTS, 36)


def test_too_few_patients():
    with pytest.raises(TooFewPatientsError):
        make_splits(PATIENTS[:3], 1)


def test_deterministic():
    assert make_splits(PATIENTS, 1, seed=5) == make_splits(PATIENTS, 1, seed=5)


def test_plan_file_round_trip(tmp_path):
    plan = make_splits(PATIENTS, 7, seed=2)
    plan.write(tmp_path / "s.json")
    assert SplitPlan.read(tmp_path / "s.json") == plan


def _matrix(keys):
    n = len(keys)
    return FeatureMatrix(np.arange(n, dtype=float)[:, None], np.zeros(n), keys, ["t000"])


def test_partition_routes_by_patient():
    keys = [p for p in "ABCDEFG" for _ in range(3)]
    m = _matrix(keys)
    split = Split(set("ABCD"), set("EFG"))
    train, test = partition(m, split)
    assert set(train.patient_keys) <= set("ABCD")
    assert train.n + test.n == m.n
    assert not set(train.patient_keys) & set(test.patient_keys)
    assert_disjoint(train, test)


def test_unassigned_patient():
    with pytest.raises(UnassignedPatientError):
        partition(_matrix(["A", "Z"]), Split({"A"}, {"B"}))


def test_disjointness_guard_fires():
    m = _matrix(["A", "B"])
    with pytest.raises(AssertionError):
        assert_disjoint(m, m)


def test_overlapping_split_is_unconstructible():
    with pytest.raises(ValueError):
        Split({"A", "B"}, {"B"})


def test_partition_tags_folds():
    train, test = partition(_matrix(list("ABCDEFG")), Split(set("ABCD"), set("EFG")))
    assert (train.fold, test.fold) == ("train", "test")
    assert train.take([0]).fold == "train"
