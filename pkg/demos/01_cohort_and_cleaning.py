"""A synthetic CCEP cohort, from raw trials to an encoded design matrix.

Run with ``python3 demos/01_cohort_and_cleaning.py``. Everything here is
deterministic: the cohort is a pure function of its generator config.
"""
import numpy as np

from ccep_soz.dataset import to_matrix
from ccep_soz.preprocess import apply_encoder, fit_encoder, reject_artifacts, trim_artifact
from ccep_soz.synth import GenConfig, generate

# Seven patients with 50-90 electrodes each; every ordered (stim, rec) pair
# of electrodes yields one 500 ms trial, labelled by the recording electrode.
cfg = GenConfig(seed=1)
raw = generate(cfg)
labels = raw.labels()
print(f"{len(raw)} raw trials from {len(raw.patients)} patients")
print(f"SOZ share of trials: {labels.mean():.3f}")

# The first 5 ms carry the stimulation artifact. Trimming it leaves 495 samples.
cleaned = trim_artifact(raw)
print(f"peak |uV| before trimming {np.abs(raw.series_matrix()).max():.0f}, "
      f"after {np.abs(cleaned.series_matrix()).max():.0f}")

# Saturated or flat trials are dropped; the default threshold is 4x the
# 95th percentile of |sample| over the cohort.
kept, rejected = reject_artifacts(cleaned)
print(f"rejected {len(rejected)} trials, {len(kept)} remain")

# Categorical metadata becomes a smoothed SOZ rate per category. In the real
# pipeline this is fitted on training patients only (see demo 02).
enc = fit_encoder(kept, m=20)
matrix = to_matrix(apply_encoder(enc, kept))
print(f"design matrix {matrix.n} x {matrix.d}: 495 series columns then {matrix.d - 495} metadata")
print("metadata columns:", ", ".join(matrix.column_names[495:]))

soz = matrix.labels == 1
amp = matrix.rows[:, matrix.column_names.index("stim_amplitude")]
print(f"mean stim_amplitude: SOZ {amp[soz].mean():.2f}, other {amp[~soz].mean():.2f}")
