"""Seeded synthetic CCEP cohorts.

Each patient gets a set of electrodes; every ordered (stim, rec) pair with
stim != rec yields one 500-sample trial made of

* a stimulus artifact in samples 0-4 (mV scale, alternating sign),
* an N1-like and an N2-like damped sinusoid peaking near 20 ms and 100 ms,
* white Gaussian noise.

SOZ membership belongs to the recording electrode. SOZ recordings have their
response amplitude multiplied by ``soz_amp_gain`` and their stimulation
amplitude shifted by ``soz_meta_shift``; with ``gain=1, shift=0`` labels carry
no information at all.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .dataset import RAW_LEN, TRIM, CcepRecord, Cohort
from .errors import InvalidConfigError, UnknownElectrodeError, WrongStageError

SATURATION_UV = 5000.0
RESPONSE_UV = 25.0
RESPONSE_LOG_SD = 0.3
_ARTIFACT_SHAPE = np.array([-1.0, 0.8, -0.6, 0.4, -0.25])


@dataclass(frozen=True)
class GenConfig:
    n_patients: int = 7
    electrodes_per_patient_range: tuple = (50, 90)
    soz_fraction: float = 0.08
    seed: int = 0
    noise_sd: float = 10.0
    soz_amp_gain: float = 1.4
    soz_meta_shift: float = 1.0
    sampling_rate: int = 1000
    n_regions: int = 24
    bad_trial_fraction: float = 0.001

    def __post_init__(self):
        object.__setattr__(
            self, "electrodes_per_patient_range", tuple(self.electrodes_per_patient_range)
        )
        self.validate()

    def validate(self):
        lo, hi = self.electrodes_per_patient_range
        problems = []
        if int(self.n_patients) < 1:
            problems.append("n_patients must be >= 1")
        if not (2 <= lo <= hi <= 512):
            problems.append("electrodes_per_patient_range must satisfy 2 <= low <= high <= 512")
        if not (0.0 < self.soz_fraction <= 0.5):
            problems.append("soz_fraction must be in (0, 0.5]")
        if not (0 <= int(self.seed) < 2**64):
            problems.append("seed must be an unsigned 64-bit integer")
        if not self.noise_sd > 0:
            problems.append("noise_sd must be positive")
        if not self.soz_amp_gain >= 1:
            problems.append("soz_amp_gain must be >= 1")
        if self.sampling_rate != 1000:
            problems.append("sampling_rate is fixed at 1000 Hz")
        if self.n_regions < 1:
            problems.append("n_regions must be >= 1")
        if not (0.0 <= self.bad_trial_fraction < 1.0):
            problems.append("bad_trial_fraction must be in [0, 1)")
        if problems:
            raise InvalidConfigError("; ".join(problems))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown generator keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidConfigError):
                raise
            raise InvalidConfigError(str(exc)) from exc

    def to_dict(self):
        d = asdict(self)
        d["electrodes_per_patient_range"] = list(self.electrodes_per_patient_range)
        return d


def _damped(t, onset, period, tau):
    u = t - onset
    out = np.exp(-np.clip(u, 0, None) / tau) * np.sin(2 * np.pi * u / period)
    return np.where(u >= 0, out, 0.0)


def _patient_records(cfg, p):
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), p]))
    lo, hi = cfg.electrodes_per_patient_range
    n_e = int(rng.integers(lo, hi + 1))
    n_soz = min(n_e - 1, max(1, int(round(cfg.soz_fraction * n_e))))
    soz = np.zeros(n_e, dtype=np.int64)
    soz[rng.choice(n_e, size=n_soz, replace=False)] = 1

    ids = [f"E{j + 1:03d}" for j in range(n_e)]
    regions = [f"R{int(k) + 1:03d}" for k in rng.integers(0, cfg.n_regions, size=n_e)]
    tissue = np.where(rng.random(n_e) < 0.6, "gray", "white")
    hemi = np.where(rng.random(n_e) < 0.5, "left", "right")
    stim_amp = np.clip(rng.normal(3.0, 0.5, size=n_e), 1.0, 6.0)
    n1_lat = np.clip(rng.normal(20.0, 3.0, size=n_e), 12.0, 30.0)
    n2_lat = np.clip(rng.normal(100.0, 15.0, size=n_e), 60.0, 140.0)

    stim, rec = np.nonzero(~np.eye(n_e, dtype=bool))
    m = stim.shape[0]
    t = np.arange(RAW_LEN, dtype=np.float64)[None, :]

    amp = RESPONSE_UV * np.exp(RESPONSE_LOG_SD * rng.standard_normal(m))
    amp = amp * np.where(soz[rec] == 1, cfg.soz_amp_gain, 1.0)
    l1 = n1_lat[rec] + rng.normal(0.0, 1.5, size=m)
    l2 = n2_lat[rec] + rng.normal(0.0, 5.0, size=m)
    n2_ratio = rng.uniform(0.4, 0.9, size=m)

    # peak of sin(2*pi*u/T) sits a quarter period after onset
    resp = -amp[:, None] * _damped(t, (l1 - 10.0)[:, None], 40.0, 20.0)
    resp -= (amp * n2_ratio)[:, None] * _damped(t, (l2 - 60.0)[:, None], 240.0, 120.0)
    series = resp + rng.normal(0.0, cfg.noise_sd, size=(m, RAW_LEN))
    art_amp = rng.uniform(150.0, 250.0, size=m) * cfg.noise_sd
    series[:, :TRIM] = art_amp[:, None] * _ARTIFACT_SHAPE[None, :]

    bad = np.nonzero(rng.random(m) < cfg.bad_trial_fraction)[0]
    for i in bad:
        if rng.random() < 0.5:
            start = int(rng.integers(TRIM, RAW_LEN - 20))
            series[i, start:start + 20] = SATURATION_UV * rng.choice([-1.0, 1.0])
        else:
            series[i, TRIM:] = 0.0

    amplitude = stim_amp[stim] + cfg.soz_meta_shift * soz[rec]
    pid = f"P{p + 1:02d}"
    return [
        CcepRecord(
            patient_id=pid,
            stim_electrode_id=ids[s],
            rec_electrode_id=ids[r],
            stim_amplitude=float(amplitude[i]),
            stim_region=regions[s],
            rec_region=regions[r],
            tissue_type=str(tissue[r]),
            hemisphere=str(hemi[r]),
            series=series[i],
            soz=int(soz[r]),
        )
        for i, (s, r) in enumerate(zip(stim, rec))
    ]


def generate(cfg=None):
    """Generate a raw cohort; a pure function of ``cfg``.

    Records are ordered by (patient, stim electrode, rec electrode). Each
    patient draws from its own RNG stream seeded by ``(seed, patient index)``.
    """
    cfg = GenConfig() if cfg is None else cfg
    if not isinstance(cfg, GenConfig):
        cfg = GenConfig.from_dict(dict(cfg))
    cfg.validate()
    records = []
    for p in range(int(cfg.n_patients)):
        records.extend(_patient_records(cfg, p))
    return Cohort(records, stage="raw")


def plant_labels(cohort, per_patient_soz):
    """Relabel so that ``soz == 1`` exactly for the listed recording electrodes."""
    if cohort.stage == "encoded":
        raise WrongStageError("electrode identities are gone after encoding")
    known = {}
    for r in cohort.records:
        known.setdefault(r.patient_id, set()).add(r.rec_electrode_id)
    for patient, electrodes in per_patient_soz.items():
        if patient not in known:
            raise UnknownElectrodeError(f"unknown patient {patient!r}")
        missing = set(electrodes) - known[patient]
        if missing:
            raise UnknownElectrodeError(f"patient {patient!r}: unknown electrodes {sorted(missing)}")
    out = []
    for r in cohort.records:
        label = int(r.rec_electrode_id in per_patient_soz.get(r.patient_id, ()))
        out.append(r if r.soz == label else r.replace(soz=label))
    return Cohort(out, stage=cohort.stage)
