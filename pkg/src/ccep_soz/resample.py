"""SMOTE oversampling of the minority class up to exact class parity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import FeatureMatrix
from .errors import MinorityTooSmallError, SingleClassError, WrongStageError


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    seed: int = 0


def minority_neighbors(x, k):
    """Indices of the ``k`` nearest other rows of ``x`` (Euclidean, brute force).

    Ties are broken by lower row index.
    """
    d2 = cdist(x, x, "sqeuclidean")
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(train, cfg=None):
    """Append ``N_maj - N_min`` synthetic minority rows to ``train``.

    Synthetic ``j`` is built from base row ``j mod N_min`` (in minority-row
    order) and one of that row's ``k`` nearest minority neighbours chosen
    uniformly, at ``x + lam * (x_nn - x)`` with ``lam ~ U[0, 1]``. Original
    rows keep their order; synthetics follow, grouped by base row, with the
    base row's patient key and ``row_id = -1``.
    """
    if train.fold != "train":
        raise WrongStageError(
            f"SMOTE needs the training fold of a split, got fold={train.fold!r}; split first"
        )
    cfg = cfg or SmoteConfig()
    y = train.labels
    counts = np.bincount(y, minlength=2)
    if counts.min() == 0:
        raise SingleClassError("SMOTE needs both classes")
    minority = int(np.argmin(counts)) if counts[0] != counts[1] else 1
    n_min, n_maj = int(counts[minority]), int(counts[1 - minority])
    n_new = n_maj - n_min
    if n_new == 0:
        return train
    if n_min <= cfg.k_neighbors:
        raise MinorityTooSmallError(
            f"minority class has {n_min} rows; need more than k_neighbors={cfg.k_neighbors}"
        )
    idx = np.nonzero(y == minority)[0]
    x = train.rows[idx]
    nn = minority_neighbors(x, cfg.k_neighbors)

    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x53]))
    base = np.arange(n_new) % n_min
    order = np.argsort(base, kind="stable")
    base = base[order]
    pick = rng.integers(0, cfg.k_neighbors, size=n_new)
    lam = rng.random(n_new)
    nb = nn[base, pick]
    synth = x[base] + lam[:, None] * (x[nb] - x[base])

    return FeatureMatrix(
        np.vstack([train.rows, synth]),
        np.concatenate([y, np.full(n_new, minority)]),
        np.concatenate([train.patient_keys, train.patient_keys[idx[base]]]),
        train.column_names,
        np.concatenate([train.row_ids, np.full(n_new, -1)]),
        "train",
    )
