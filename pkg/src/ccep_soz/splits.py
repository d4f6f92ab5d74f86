"""Patient-grouped train/test partitions."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureMatrix
from .errors import (
    IoFailureError,
    TooFewPatientsError,
    TooManySplitsRequestedError,
    UnassignedPatientError,
)

MIN_PATIENTS = 4
TRAIN_SHARE = 4 / 7


@dataclass(frozen=True)
class Split:
    train_patients: frozenset
    test_patients: frozenset

    def __post_init__(self):
        object.__setattr__(self, "train_patients", frozenset(self.train_patients))
        object.__setattr__(self, "test_patients", frozenset(self.test_patients))
        if self.train_patients & self.test_patients:
            raise ValueError("a patient cannot sit on both sides of a split")


@dataclass(frozen=True)
class SplitPlan:
    splits: tuple
    seed: int

    def __len__(self):
        return len(self.splits)

    def __iter__(self):
        return iter(self.splits)

    def __getitem__(self, i):
        return self.splits[i]

    def to_json(self):
        return {
            "seed": int(self.seed),
            "splits": [
                {"train": sorted(s.train_patients), "test": sorted(s.test_patients)}
                for s in self.splits
            ],
        }

    def write(self, path):
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(self.to_json(), fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise IoFailureError(str(exc)) from exc

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(
            tuple(Split(s["train"], s["test"]) for s in data["splits"]),
            data["seed"],
        )


def train_size(n_patients):
    return math.ceil(TRAIN_SHARE * n_patients)


def make_splits(patients, n_splits=7, seed=0):
    """Sample ``n_splits`` distinct train/test partitions uniformly.

    With 7 patients this draws without replacement from the C(7, 4) = 35
    ways of putting four patients in training.
    """
    patients = sorted(set(patients))
    if len(patients) < MIN_PATIENTS:
        raise TooFewPatientsError(
            f"need at least {MIN_PATIENTS} patients for grouped splits, got {len(patients)}"
        )
    k = train_size(len(patients))
    total = math.comb(len(patients), k)
    if n_splits > total:
        raise TooManySplitsRequestedError(
            f"only {total} distinct {k}/{len(patients) - k} partitions exist, asked for {n_splits}"
        )
    if n_splits < 1:
        raise TooManySplitsRequestedError("n_splits must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    if total <= 100_000:
        combos = list(itertools.combinations(patients, k))
        picks = [combos[i] for i in rng.choice(total, size=n_splits, replace=False)]
    else:
        seen, picks = set(), []
        while len(picks) < n_splits:
            c = tuple(sorted(rng.choice(patients, size=k, replace=False).tolist()))
            if c not in seen:
                seen.add(c)
                picks.append(c)
    all_p = frozenset(patients)
    return SplitPlan(tuple(Split(c, all_p - frozenset(c)) for c in picks), int(seed))


def partition(matrix, split):
    """Route rows to ``(train, test)`` by patient key, tagging each side's fold."""
    keys = matrix.patient_keys
    known = split.train_patients | split.test_patients
    unknown = set(np.unique(keys).tolist()) - known
    if unknown:
        raise UnassignedPatientError(f"patients not in split: {sorted(unknown)}")
    in_train = np.fromiter((k in split.train_patients for k in keys), dtype=bool, count=len(keys))
    train = matrix.take(np.nonzero(in_train)[0]).with_fold("train")
    test = matrix.take(np.nonzero(~in_train)[0]).with_fold("test")
    return train, test


def assert_disjoint(train, test):
    """Leakage guard: no patient may contribute rows to both sides."""
    shared = set(train.patient_keys.tolist()) & set(test.patient_keys.tolist())
    if shared:
        raise AssertionError(f"patients on both sides of a split: {sorted(shared)}")
