import numpy as np
import pytest

from ccep_soz.dataset import (
    RAW_LEN,
    TRIMMED_LEN,
    Cohort,
    FeatureMatrix,
    header,
    load_csv,
    to_matrix,
    write_csv,
)
from ccep_soz.errors import (
    LengthMismatchError,
    MissingColumnError,
    NonFiniteValueError,
    ValidationError,
    WrongStageError,
)
from ccep_soz.preprocess import apply_encoder, fit_encoder, trim_artifact


def test_csv_round_trip_is_byte_stable(small_cohort, tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_csv(small_cohort, a)
    back = load_csv(a, "raw")
    assert len(back) == len(small_cohort)
    assert all(x == y for x, y in zip(back, small_cohort))
    write_csv(back, b)
    assert a.read_bytes() == b.read_bytes()


def test_three_row_file_loads(small_cohort, tmp_path):
    path = tmp_path / "three.csv"
    write_csv(small_cohort.subset([0, 1, 2]), path)
    c = load_csv(path)
    assert len(c) == 3 and c.stage == "raw"


def test_single_record_writes_two_lines(small_cohort, tmp_path):
    path = tmp_path / "one.csv"
    write_csv(small_cohort.subset([0]), path)
    assert len(path.read_text().splitlines()) == 2


def test_empty_cohort_cannot_be_written(tmp_path):
    with pytest.raises(ValidationError):
        write_csv(Cohort([], stage="raw"), tmp_path / "x.csv")


def test_nan_sample_is_reported_with_its_column(small_cohort, tmp_path):
    path = tmp_path / "bad.csv"
    write_csv(small_cohort.subset([0, 1]), path)
    lines = path.read_text().splitlines()
    cols = lines[0].split(",")
    j = cols.index("t012")
    cells = lines[2].split(",")
    cells[j] = "NaN"
    lines[2] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(NonFiniteValueError) as info:
        load_csv(path)
    assert info.value.column == "t012"
    assert info.value.row == 1


def test_missing_column(small_cohort, tmp_path):
    path = tmp_path / "bad.csv"
    write_csv(small_cohort.subset([0]), path)
    lines = path.read_text().splitlines()
    cols = lines[0].split(",")
    j = cols.index("hemisphere")
    rows = [",".join(c for i, c in enumerate(line.split(",")) if i != j) for line in lines]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(MissingColumnError):
        load_csv(path)


def test_header_lengths():
    assert sum(c.startswith("t") and c[1:].isdigit() for c in header("raw")) == RAW_LEN
    assert sum(c.startswith("t") and c[1:].isdigit() for c in header("cleaned")) == TRIMMED_LEN


def test_matrix_widths(small_cohort):
    cleaned = trim_artifact(small_cohort)
    encoded = apply_encoder(fit_encoder(cleaned, 20), cleaned)
    assert to_matrix(encoded, include_metadata=True).d == 502
    assert to_matrix(encoded, include_metadata=False).d == 495
    assert to_matrix(encoded).series_only().d == 495


def test_matrix_needs_encoded_stage(small_cohort):
    with pytest.raises(WrongStageError):
        to_matrix(small_cohort)


def test_record_length_is_checked(small_cohort):
    with pytest.raises(LengthMismatchError):
        small_cohort.records[0].replace(series=np.zeros(400))


def test_feature_matrix_rejects_non_finite():
    with pytest.raises(ValidationError):
        FeatureMatrix(np.array([[np.inf]]), [0], ["p"], ["t000"])


def test_feature_matrix_is_read_only(small_matrix):
    with pytest.raises(ValueError):
        small_matrix.rows[0, 0] = 1.0
