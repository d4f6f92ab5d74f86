"""CCEP record types and CSV ingestion/serialization.

One CSV row is one stimulation-response trial. The raw schema is::

    patient_id,stim_electrode_id,rec_electrode_id,stim_amplitude,
    stim_region,rec_region,tissue_type,hemisphere,t000..t499,soz

The cleaned stage carries ``t000..t494`` (artifact samples dropped) and the
encoded stage replaces each categorical metadata column ``c`` by a float
column ``c_enc``. Floats are written with ``repr`` (shortest round-trip
decimal) so ``load_csv``/``write_csv`` round-trip bit-exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadEnumError,
    IoFailureError,
    LengthMismatchError,
    MissingColumnError,
    NonFiniteValueError,
    ValidationError,
    WrongStageError,
)

RAW_LEN = 500
TRIM = 5
TRIMMED_LEN = RAW_LEN - TRIM

STAGES = ("raw", "cleaned", "encoded")
FOLDS = (None, "train", "test")
TISSUE_TYPES = ("gray", "white")
HEMISPHERES = ("left", "right")

# categorical metadata, in CSV column order
CATEGORICAL = (
    "stim_electrode_id",
    "rec_electrode_id",
    "stim_region",
    "rec_region",
    "tissue_type",
    "hemisphere",
)
# metadata feature order used by the design matrix (after the series)
METADATA_FEATURES = (
    "stim_amplitude",
    "stim_region",
    "rec_region",
    "tissue_type",
    "hemisphere",
    "stim_electrode_id",
    "rec_electrode_id",
)
_ENUMS = {"tissue_type": TISSUE_TYPES, "hemisphere": HEMISPHERES}


def series_len(stage):
    return RAW_LEN if stage == "raw" else TRIMMED_LEN


def series_columns(n):
    return [f"t{i:03d}" for i in range(n)]


def header(stage):
    """Expected CSV header for ``stage``."""
    if stage not in STAGES:
        raise ValidationError(f"unknown stage {stage!r}")
    enc = stage == "encoded"
    meta = [
        "stim_electrode_id",
        "rec_electrode_id",
        "stim_amplitude",
        "stim_region",
        "rec_region",
        "tissue_type",
        "hemisphere",
    ]
    if enc:
        meta = [c + "_enc" if c in CATEGORICAL else c for c in meta]
    return ["patient_id", *meta, *series_columns(series_len(stage)), "soz"]


@dataclass(frozen=True, eq=False)
class CcepRecord:
    """One stimulation-response trial.

    The categorical fields hold strings before encoding and floats after.
    ``series`` is a read-only float64 vector in microvolts, one sample per ms.
    """

    patient_id: str
    stim_electrode_id: str | float
    rec_electrode_id: str | float
    stim_amplitude: float
    stim_region: str | float
    rec_region: str | float
    tissue_type: str | float
    hemisphere: str | float
    series: np.ndarray
    soz: int

    def __post_init__(self):
        s = np.asarray(self.series, dtype=np.float64)
        if s.flags.writeable:
            s = s.copy()
            s.flags.writeable = False
        object.__setattr__(self, "series", s)
        if self.soz not in (0, 1):
            raise ValidationError(f"soz must be 0 or 1, got {self.soz!r}")
        if s.ndim != 1 or s.shape[0] not in (RAW_LEN, TRIMMED_LEN):
            raise LengthMismatchError(
                f"series length must be {RAW_LEN} or {TRIMMED_LEN}, got {s.shape}"
            )

    def replace(self, **changes):
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return CcepRecord(**values)

    def __eq__(self, other):
        if not isinstance(other, CcepRecord):
            return NotImplemented
        for f in self.__dataclass_fields__:
            a, b = getattr(self, f), getattr(other, f)
            if f == "series":
                if a.shape != b.shape or not np.array_equal(a, b):
                    return False
            elif a != b or type(a) is not type(b):
                return False
        return True

    __hash__ = None


@dataclass(frozen=True)
class Cohort:
    """An ordered collection of records at one pipeline stage."""

    records: tuple
    stage: str = "raw"
    patients: frozenset = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.stage not in STAGES:
            raise ValidationError(f"unknown stage {self.stage!r}")
        keys = frozenset(r.patient_id for r in self.records)
        if self.patients is None:
            object.__setattr__(self, "patients", keys)
        else:
            object.__setattr__(self, "patients", frozenset(self.patients))
            if not keys <= self.patients:
                raise ValidationError("record patient_id missing from cohort patients")
        n = series_len(self.stage)
        for i, r in enumerate(self.records):
            if r.series.shape[0] != n:
                raise LengthMismatchError(
                    f"record {i}: series length {r.series.shape[0]} != {n} for stage {self.stage}"
                )

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def labels(self):
        return np.fromiter((r.soz for r in self.records), dtype=np.int64, count=len(self))

    def series_matrix(self):
        if not self.records:
            return np.empty((0, series_len(self.stage)))
        return np.stack([r.series for r in self.records])

    def subset(self, indices):
        return Cohort([self.records[i] for i in indices], stage=self.stage)

    def for_patients(self, patients):
        patients = set(patients)
        return Cohort([r for r in self.records if r.patient_id in patients], stage=self.stage)


@dataclass(frozen=True)
class FeatureMatrix:
    """Numeric design matrix with aligned labels and patient keys.

    ``row_ids`` tracks provenance: the index of the source record in the
    cohort the matrix was built from, or -1 for synthetic (SMOTE) rows.
    ``fold`` is ``None`` for a whole cohort and ``"train"`` or ``"test"``
    once a patient-grouped split has routed the rows; oversampling accepts
    only training folds, so it cannot run before the split.
    """

    rows: np.ndarray
    labels: np.ndarray
    patient_keys: np.ndarray
    column_names: tuple
    row_ids: np.ndarray = None
    fold: str | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        keys = np.asarray(self.patient_keys, dtype=object)
        if rows.ndim != 2:
            raise ValidationError("rows must be a 2-D array")
        n, d = rows.shape
        if labels.shape != (n,) or keys.shape != (n,):
            raise LengthMismatchError(
                f"rows ({n}), labels ({labels.shape[0]}) and patient_keys ({keys.shape[0]}) disagree"
            )
        if len(self.column_names) != d:
            raise LengthMismatchError(f"{len(self.column_names)} column names for {d} columns")
        if not np.all(np.isfinite(rows)):
            raise ValidationError("feature matrix contains non-finite entries")
        if self.fold not in FOLDS:
            raise ValidationError(f"fold must be one of {FOLDS}, got {self.fold!r}")
        row_ids = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if row_ids.shape != (n,):
            raise LengthMismatchError("row_ids length disagrees with rows")
        # views, so freezing never touches the caller's arrays
        rows, labels, keys, row_ids = (a.view() for a in (rows, labels, keys, row_ids))
        for a in (rows, labels, keys, row_ids):
            a.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "patient_keys", keys)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def d(self):
        return self.rows.shape[1]

    def take(self, index):
        index = np.asarray(index)
        return FeatureMatrix(
            self.rows[index],
            self.labels[index],
            self.patient_keys[index],
            self.column_names,
            self.row_ids[index],
            self.fold,
        )

    def with_fold(self, fold, row_ids=None):
        """Same rows tagged as one side of a split (optionally with new ``row_ids``)."""
        return FeatureMatrix(self.rows, self.labels, self.patient_keys, self.column_names,
                             self.row_ids if row_ids is None else row_ids, fold)

    def series_only(self):
        """Drop the trailing metadata columns, keeping the series columns."""
        keep = [i for i, c in enumerate(self.column_names) if c.startswith("t") and c[1:].isdigit()]
        return FeatureMatrix(
            self.rows[:, keep],
            self.labels,
            self.patient_keys,
            [self.column_names[i] for i in keep],
            self.row_ids,
            self.fold,
        )


def to_matrix(cohort, include_metadata=True):
    """Design matrix: the 495 series columns, then (optionally) 7 metadata columns."""
    if cohort.stage != "encoded":
        raise WrongStageError(f"to_matrix needs an encoded cohort, got stage={cohort.stage!r}")
    names = series_columns(TRIMMED_LEN)
    if cohort.records:
        series = cohort.series_matrix()
    else:
        series = np.empty((0, TRIMMED_LEN))
    if include_metadata:
        meta = np.array(
            [[float(getattr(r, c)) for c in METADATA_FEATURES] for r in cohort.records],
            dtype=np.float64,
        ).reshape(len(cohort), len(METADATA_FEATURES))
        rows = np.hstack([series, meta])
        names += [c if c == "stim_amplitude" else c + "_enc" for c in METADATA_FEATURES]
    else:
        rows = series
    return FeatureMatrix(
        rows,
        cohort.labels(),
        np.array([r.patient_id for r in cohort.records], dtype=object),
        names,
    )


# -- CSV ----------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def _parse_float(text, row, col):
    try:
        v = float(text)
    except ValueError:
        raise NonFiniteValueError(row, col) from None
    if not math.isfinite(v):
        raise NonFiniteValueError(row, col)
    return v


def load_csv(path, schema="raw"):
    """Read a cohort CSV for the given stage.

    Rows are validated as they are read; the first failing row raises with
    its 0-based data-row index.
    """
    expected = header(schema)
    n_series = series_len(schema)
    t_start = 8
    enc = schema == "encoded"
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise MissingColumnError(expected[0]) from None
        if got != expected:
            missing = [c for c in expected if c not in got]
            extra = [c for c in got if c not in expected]
            raise MissingColumnError((missing or extra or ["<column order>"])[0])
        records = []
        for i, fields in enumerate(reader):
            if len(fields) != len(expected):
                raise LengthMismatchError(
                    f"row {i}: {len(fields)} fields, expected {len(expected)}"
                )
            cat = {}
            for j, name in enumerate(expected[1:8], start=1):
                base = name[:-4] if name.endswith("_enc") else name
                if name == "stim_amplitude":
                    continue
                if enc:
                    cat[base] = _parse_float(fields[j], i, name)
                else:
                    value = fields[j]
                    if base in _ENUMS and value not in _ENUMS[base]:
                        raise BadEnumError(i, name, value)
                    if value == "":
                        raise BadEnumError(i, name, value)
                    cat[base] = value
            amp = _parse_float(fields[3], i, "stim_amplitude")
            try:
                series = np.array(fields[t_start:t_start + n_series], dtype=np.float64)
            except ValueError:
                series = None
            if series is None or not np.all(np.isfinite(series)):
                for k in range(n_series):
                    _parse_float(fields[t_start + k], i, expected[t_start + k])
            soz = fields[-1]
            if soz not in ("0", "1"):
                raise BadEnumError(i, "soz", soz)
            records.append(
                CcepRecord(
                    patient_id=fields[0],
                    stim_amplitude=amp,
                    series=series,
                    soz=int(soz),
                    **cat,
                )
            )
    return Cohort(records, stage=schema)


def write_csv(cohort, path):
    """Write ``cohort`` in its stage's schema, input row order, LF endings."""
    if len(cohort) == 0:
        raise ValidationError("refusing to write an empty cohort")
    cols = header(cohort.stage)
    enc = cohort.stage == "encoded"
    rows = []
    for r in cohort.records:
        meta = []
        for name in cols[1:8]:
            base = name[:-4] if name.endswith("_enc") else name
            v = getattr(r, base)
            meta.append(_fmt(v) if (enc or base == "stim_amplitude") else str(v))
        rows.append([r.patient_id, *meta, *map(repr, r.series.tolist()), str(r.soz)])
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            writer.writerows(rows)
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc
