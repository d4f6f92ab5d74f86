import numpy as np
import pytest

from ccep_soz.errors import InvalidConfigError, UnknownElectrodeError
from ccep_soz.synth import GenConfig, generate, plant_labels


def test_pair_count():
    c = generate(GenConfig(n_patients=2, electrodes_per_patient_range=(3, 3)))
    assert len(c) == 12
    assert c.patients == {"P01", "P02"}


def test_default_soz_fraction_near_eight_percent():
    c = generate(GenConfig(electrodes_per_patient_range=(50, 90), seed=3))
    frac = c.labels().mean()
    assert abs(frac - 0.08) <= 0.03


def test_same_seed_same_cohort(tmp_path):
    from ccep_soz.dataset import write_csv

    cfg = GenConfig(n_patients=3, electrodes_per_patient_range=(4, 6), seed=9)
    write_csv(generate(cfg), tmp_path / "a.csv")
    write_csv(generate(cfg), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_different_seeds_differ():
    a = generate(GenConfig(n_patients=2, electrodes_per_patient_range=(4, 4), seed=1))
    b = generate(GenConfig(n_patients=2, electrodes_per_patient_range=(4, 4), seed=2))
    assert not np.array_equal(a.series_matrix(), b.series_matrix())


@pytest.mark.parametrize("bad", [
    {"electrodes_per_patient_range": (1, 5)},
    {"electrodes_per_patient_range": (9, 5)},
    {"soz_fraction": 0.0},
    {"soz_fraction": 0.6},
    {"n_patients": 0},
    {"soz_amp_gain": 0.5},
])
def test_invalid_config(bad):
    with pytest.raises(InvalidConfigError):
        GenConfig(**bad)


def test_unknown_key():
    with pytest.raises(InvalidConfigError):
        GenConfig.from_dict({"n_patient": 3})


def test_plant_labels(small_cohort):
    assert plant_labels(small_cohort, {}).labels().sum() == 0
    everything = {}
    for r in small_cohort:
        everything.setdefault(r.patient_id, set()).add(r.rec_electrode_id)
    assert plant_labels(small_cohort, everything).labels().all()
    one = plant_labels(small_cohort, {"P01": {"E001"}})
    expected = sum(r.patient_id == "P01" and r.rec_electrode_id == "E001" for r in small_cohort)
    assert one.labels().sum() == expected


def test_plant_unknown_electrode(small_cohort):
    with pytest.raises(UnknownElectrodeError):
        plant_labels(small_cohort, {"P01": {"E999"}})


def test_labels_follow_recording_electrode(small_cohort):
    by_electrode = {}
    for r in small_cohort:
        by_electrode.setdefault((r.patient_id, r.rec_electrode_id), set()).add(r.soz)
    assert all(len(v) == 1 for v in by_electrode.values())
