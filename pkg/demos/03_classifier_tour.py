"""Each classifier on one small split, scored by ROC AUC on held-out patients.

The cohort is kept small so the tour finishes in under a minute; scale it
up through the generator config for more stable numbers.
"""
import time
import warnings

from ccep_soz.experiment import RunConfig, fit_predict, job_seed, prepare_split
from ccep_soz.metrics import MODEL_LABELS, roc_auc, soft_ensemble, ENSEMBLE_MEMBERS
from ccep_soz.preprocess import trim_artifact
from ccep_soz.splits import make_splits
from ccep_soz.synth import GenConfig, generate

warnings.simplefilter("ignore")

gen = GenConfig(electrodes_per_patient_range=(12, 14), soz_fraction=0.2, soz_meta_shift=2.0, seed=3)
cleaned = trim_artifact(generate(gen))
cfg = RunConfig.from_dict({
    "schema_version": 1,
    "seed": 0,
    "knn": {"train_subsample": 300},
    "svm": {"train_subsample": 1000},
    "fcn": {"filters": 8, "epochs": 10, "train_subsample": 1500},
})
split = make_splits(sorted(cleaned.patients), 2, seed=0)[0]
data = prepare_split(cleaned, split, 0, cfg)
y = data.test.labels
print(f"train {data.train.n} rows, test {data.test.n} rows ({y.sum()} SOZ)\n")

probas = {}
for model in [m for m in cfg.models if m != "soft-ensemble"]:
    t0 = time.perf_counter()
    scores, _, proba = fit_predict(model, cfg, data, job_seed(cfg.seed, 0, model))
    probas[model] = proba
    print(f"{MODEL_LABELS[model]:<20} AUC {roc_auc(y, scores):.3f}  ({time.perf_counter() - t0:.1f}s)")

ens = soft_ensemble([probas[m] for m in ENSEMBLE_MEMBERS])
print(f"{'Soft Ensemble':<20} AUC {roc_auc(y, ens[:, 1]):.3f}")
