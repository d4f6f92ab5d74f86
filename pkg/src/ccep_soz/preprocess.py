"""Artifact trimming, automated trial rejection and target encoding."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dataset import CATEGORICAL, RAW_LEN, TRIM, Cohort
from .errors import IoFailureError, SingleClassTrainingError, WrongStageError

DEFAULT_SMOOTHING = 20.0
DEFAULT_FLAT_EPS = 1e-6
SAT_RUN = 5


def trim_artifact(cohort):
    """Drop the first 5 samples (stimulus artifact) of every raw record."""
    if cohort.stage != "raw":
        raise WrongStageError(f"trim_artifact needs a raw cohort, got stage={cohort.stage!r}")
    records = [r.replace(series=r.series[TRIM:]) for r in cohort.records]
    for r in records:
        assert r.series.shape[0] == RAW_LEN - TRIM
    return Cohort(records, stage="cleaned", patients=cohort.patients)


def default_sat_threshold(cohort):
    """4x the 95th percentile of |sample| over the whole cohort."""
    x = np.abs(cohort.series_matrix())
    if x.size == 0:
        return np.inf
    return 4.0 * float(np.percentile(x, 95))


def artifact_reasons(cohort, sat_threshold=None, flat_eps=DEFAULT_FLAT_EPS):
    """List ``(row_index, reason)`` for every record that should be rejected.

    ``reason`` is ``"saturation"`` (at least 5 consecutive samples with
    ``|x| >= sat_threshold``) or ``"flatline"`` (variance below ``flat_eps``).
    Saturation wins when both apply.
    """
    if cohort.stage != "cleaned":
        raise WrongStageError(f"reject_artifacts needs a cleaned cohort, got stage={cohort.stage!r}")
    if len(cohort) == 0:
        return []
    if sat_threshold is None:
        sat_threshold = default_sat_threshold(cohort)
    x = cohort.series_matrix()
    hot = np.abs(x) >= sat_threshold
    runs = np.lib.stride_tricks.sliding_window_view(hot, SAT_RUN, axis=1).all(axis=2).any(axis=1)
    flat = x.var(axis=1) < flat_eps
    out = []
    for i in np.nonzero(runs | flat)[0]:
        out.append((int(i), "saturation" if runs[i] else "flatline"))
    return out


def reject_artifacts(cohort, sat_threshold=None, flat_eps=DEFAULT_FLAT_EPS):
    """Remove saturated or flat trials; returns ``(survivors, rejected_indices)``."""
    reasons = artifact_reasons(cohort, sat_threshold, flat_eps)
    rejected = [i for i, _ in reasons]
    drop = set(rejected)
    keep = [r for i, r in enumerate(cohort.records) if i not in drop]
    return Cohort(keep, stage="cleaned"), rejected


def write_rejections(path, reasons):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_index", "reason"])
            w.writerows(reasons)
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc


@dataclass(frozen=True)
class TargetEncoder:
    """Smoothed per-category positive rate, fitted on one training fold.

    ``tables[col][category] = (positives + m * prior) / (count + m)``;
    categories not seen in training map to ``global_prior``.
    """

    tables: dict
    global_prior: float
    m: float
    fitted_on: object = None
    columns: tuple = field(default=CATEGORICAL)

    def encode(self, column, category):
        return self.tables[column].get(category, self.global_prior)


def fit_encoder(train, m=DEFAULT_SMOOTHING, fitted_on=None):
    if train.stage != "cleaned":
        raise WrongStageError(f"fit_encoder needs a cleaned cohort, got stage={train.stage!r}")
    if m < 0:
        raise ValueError("smoothing m must be >= 0")
    y = train.labels()
    if y.size == 0 or y.min() == y.max():
        raise SingleClassTrainingError("target encoding needs both classes in the training fold")
    prior = float(y.mean())
    tables = {}
    for col in CATEGORICAL:
        counts, positives = {}, {}
        for r, label in zip(train.records, y):
            c = getattr(r, col)
            counts[c] = counts.get(c, 0) + 1
            positives[c] = positives.get(c, 0) + int(label)
        tables[col] = {
            c: (positives[c] + m * prior) / (counts[c] + m) for c in sorted(counts)
        }
    return TargetEncoder(tables, prior, float(m), fitted_on)


def apply_encoder(enc, cohort):
    """Replace every categorical field by its encoded float.

    Reads only the encoder and the categorical values; the cohort's labels
    are carried through untouched and never consulted.
    """
    if cohort.stage != "cleaned":
        raise WrongStageError(f"apply_encoder needs a cleaned cohort, got stage={cohort.stage!r}")
    records = [
        r.replace(**{col: float(enc.encode(col, getattr(r, col))) for col in enc.columns})
        for r in cohort.records
    ]
    return Cohort(records, stage="encoded", patients=cohort.patients)
