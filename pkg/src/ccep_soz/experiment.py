"""End-to-end experiment: data -> clean -> split -> encode -> SMOTE -> fit -> report.

Every split is prepared in order (the encoder and SMOTE only ever see that
split's training patients) and its model fits then run as independent jobs
on a thread pool capped by ``SOZ_THREADS``. Each job draws its randomness
from ``SeedSequence([seed, split, crc32(model)])`` so the thread count never
changes a result.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__
from .dataset import FeatureMatrix, load_csv, to_matrix
from .errors import InvalidConfigError, IoFailureError, PipelineError
from .fcn import FcnClassifier, FcnConfig, VARIANT_LENGTHS
from .knn import DtwConfig, KnnDtwClassifier
from .metrics import (
    ENSEMBLE_MEMBERS,
    MODEL_LABELS,
    aggregate,
    evaluate,
    proba_labels,
    soft_ensemble,
    write_results_csv,
)
from .preprocess import (
    DEFAULT_FLAT_EPS,
    DEFAULT_SMOOTHING,
    apply_encoder,
    artifact_reasons,
    fit_encoder,
    trim_artifact,
    write_rejections,
)
from .resample import SmoteConfig, smote
from .splits import assert_disjoint, make_splits
from .svm import SvmClassifier, SvmConfig
from .synth import GenConfig, generate
from .trees import (
    BoostConfig,
    ExtraTrees,
    ForestConfig,
    GradientBoosting,
    RandomForest,
)

log = logging.getLogger("ccep_soz")

SCHEMA_VERSION = 1
MODEL_NAMES = tuple(MODEL_LABELS)
PROFILES = ("paper", "desk")

# estimator counts and runtime caps per profile; explicit config keys win
PROFILE_DEFAULTS = {
    "paper": {
        "knn": {},
        "svm": {},
        "fcn": {"filters": 64},
        "rf": {"n_estimators": 500},
        "extra_trees": {"n_estimators": 500},
        "gbdt_x": {"n_estimators": 1200},
        "gbdt_c": {"n_estimators": 1000},
    },
    "desk": {
        "knn": {"train_subsample": 2000},
        "svm": {"train_subsample": 2000},
        "fcn": {"filters": 16, "train_subsample": 4000},
        "rf": {"n_estimators": 100},
        "extra_trees": {"n_estimators": 100},
        "gbdt_x": {"n_estimators": 100},
        "gbdt_c": {"n_estimators": 100},
    },
}

_BLOCK_KEYS = {
    "knn": {"k", "band_radius", "meta_weight", "train_subsample"},
    "svm": {"c", "gamma", "tol", "max_passes", "train_subsample", "degree", "coef0"},
    "fcn": {"lr", "epochs", "batch_size", "train_subsample", "filters", "dtype", "meta_gain"},
    "rf": {"n_estimators", "max_depth", "mtry"},
    "extra_trees": {"n_estimators", "max_depth", "mtry"},
    "gbdt_x": {"n_estimators", "learning_rate", "max_depth", "reg_lambda", "lambda", "gamma"},
    "gbdt_c": {"n_estimators", "learning_rate", "max_depth", "reg_lambda", "lambda", "gamma"},
}
_TOP_KEYS = {"schema_version", "seed", "profile", "models", "generator", "pipeline", "paths"} | set(
    _BLOCK_KEYS
)


@dataclass(frozen=True)
class PipelineConfig:
    smoothing_m: float = DEFAULT_SMOOTHING
    smote_k: int = 5
    n_splits: int = 7
    sat_threshold: float | None = None
    flat_eps: float = DEFAULT_FLAT_EPS


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    profile: str = "desk"
    models: tuple = MODEL_NAMES
    generator: GenConfig | None = None
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    blocks: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        self.validate()

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidConfigError(f"schema_version must be {SCHEMA_VERSION}")
        if self.profile not in PROFILES:
            raise InvalidConfigError(f"profile must be one of {PROFILES}")
        if not self.models:
            raise InvalidConfigError("models must list at least one model")
        unknown = [m for m in self.models if m not in MODEL_NAMES]
        if unknown:
            raise InvalidConfigError(f"unknown models: {unknown}")
        if len(set(self.models)) != len(self.models):
            raise InvalidConfigError("models must not repeat")
        if "soft-ensemble" in self.models:
            missing = [m for m in ENSEMBLE_MEMBERS if m not in self.models]
            if missing:
                raise InvalidConfigError(f"soft-ensemble needs its members in models: {missing}")
        if self.pipeline.n_splits < 2:
            raise InvalidConfigError("pipeline.n_splits must be >= 2")
        if self.pipeline.smote_k < 1 or self.pipeline.smoothing_m < 0:
            raise InvalidConfigError("pipeline.smote_k must be >= 1 and smoothing_m >= 0")
        if self.pipeline.flat_eps < 0:
            raise InvalidConfigError("pipeline.flat_eps must be >= 0")
        for name, block in self.blocks.items():
            if name not in _BLOCK_KEYS:
                raise InvalidConfigError(f"unknown config block {name!r}")
            extra = set(block) - _BLOCK_KEYS[name]
            if extra:
                raise InvalidConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
        # build every model config once so bad values fail before any work
        for name in self.models:
            if name != "soft-ensemble":
                self.model_config(name, seed=0)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise InvalidConfigError("config must be a JSON object")
        extra = set(data) - _TOP_KEYS
        if extra:
            raise InvalidConfigError(f"unknown top-level keys: {sorted(extra)}")
        if "schema_version" not in data:
            raise InvalidConfigError("config needs a schema_version field")
        try:
            gen = data.get("generator")
            pipe = dict(data.get("pipeline", {}))
            bad = set(pipe) - {f.name for f in fields(PipelineConfig)}
            if bad:
                raise InvalidConfigError(f"unknown pipeline keys: {sorted(bad)}")
            return cls(
                seed=int(data.get("seed", 0)),
                profile=data.get("profile", "desk"),
                models=tuple(data.get("models", MODEL_NAMES)),
                generator=None if gen is None else GenConfig.from_dict(gen),
                pipeline=PipelineConfig(**pipe),
                blocks={k: dict(v) for k, v in data.items() if k in _BLOCK_KEYS},
                paths=dict(data.get("paths", {})),
                schema_version=data["schema_version"],
            )
        except InvalidConfigError:
            raise
        except (TypeError, ValueError, AttributeError) as exc:
            raise InvalidConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise IoFailureError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        out = {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "profile": self.profile,
            "models": list(self.models),
            "pipeline": asdict(self.pipeline),
        }
        if self.generator is not None:
            out["generator"] = self.generator.to_dict()
        for name in sorted(self.blocks):
            out[name] = dict(self.blocks[name])
        return out

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def block(self, name):
        merged = dict(PROFILE_DEFAULTS[self.profile][name])
        merged.update(self.blocks.get(name, {}))
        return merged

    def model_config(self, model, seed):
        """Concrete config object for one model and job seed."""
        try:
            if model == "knn-dtw":
                return DtwConfig(**self.block("knn"), seed=seed)
            if model in ("svm-poly", "svm-rbf"):
                return SvmConfig(kernel=model[4:], **self.block("svm"), seed=seed)
            if model in ("fcn-ts", "fcn-tsm"):
                b = self.block("fcn")
                f = b.pop("filters", 64)
                filters = (f, f, f) if isinstance(f, int) else tuple(f)
                return FcnConfig(filters=filters, variant=model[4:].upper(), seed=seed, **b)
            if model in ("rf", "extra-trees"):
                key = "rf" if model == "rf" else "extra_trees"
                return ForestConfig(**self.block(key), bootstrap=model == "rf", seed=seed)
            if model in ("gbdt-x", "gbdt-c"):
                b = self.block("gbdt_x" if model == "gbdt-x" else "gbdt_c")
                if "lambda" in b:
                    b["reg_lambda"] = b.pop("lambda")
                return BoostConfig(**b, oblivious=model == "gbdt-c", seed=seed)
        except InvalidConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"{model}: {exc}") from exc
        raise InvalidConfigError(f"no config for model {model!r}")


def job_seed(seed, split, model):
    """Independent 63-bit seed for one (split, model) job."""
    ss = np.random.SeedSequence([int(seed), int(split), zlib.crc32(model.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def thread_cap():
    raw = os.environ.get("SOZ_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidConfigError(f"SOZ_THREADS must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise InvalidConfigError(f"SOZ_THREADS must be a positive integer, got {raw!r}")
    return n


@dataclass
class SplitData:
    index: int
    train: FeatureMatrix
    test: FeatureMatrix
    encoder: object


@dataclass
class ExperimentOutput:
    table: object
    results: list
    plan: object
    rejections: list
    scores: dict = field(default_factory=dict)


def _stage(name, split=None, model=None):
    """Context manager that tags errors with their pipeline position."""
    return _Stage(name, split, model)


class _Stage:
    def __init__(self, name, split, model):
        self.name, self.split, self.model = name, split, model

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        wall = time.perf_counter() - self.t0
        if exc is None:
            log.info("stage=%s split=%s model=%s wall=%.2fs", self.name,
                     "-" if self.split is None else self.split, self.model or "-", wall)
            return False
        if isinstance(exc, PipelineError):
            return False
        raise PipelineError(exc, self.name, self.split, self.model) from exc


def prepare_split(cleaned, split, index, cfg):
    """Encoder fit on the training patients only, then SMOTE on the training fold."""
    keys = np.array([r.patient_id for r in cleaned.records], dtype=object)
    in_train = np.fromiter((k in split.train_patients for k in keys), bool, len(keys))
    train_idx = np.nonzero(in_train)[0]
    test_idx = np.nonzero(~in_train)[0]
    with _stage("encode", index):
        train_c = cleaned.subset(train_idx)
        test_c = cleaned.subset(test_idx)
        enc = fit_encoder(train_c, cfg.pipeline.smoothing_m, fitted_on=index)
        train_m = to_matrix(apply_encoder(enc, train_c)).with_fold("train", train_idx)
        test_m = to_matrix(apply_encoder(enc, test_c)).with_fold("test", test_idx)
    with _stage("leakage", index):
        assert_disjoint(train_m, test_m)
    with _stage("oversample", index):
        smote_seed = job_seed(cfg.seed, index, "smote")
        train_s = smote(train_m, SmoteConfig(cfg.pipeline.smote_k, smote_seed))
    with _stage("leakage", index):
        audit_provenance(train_s, test_m, split)
    return SplitData(index, train_s, test_m, enc)


def audit_provenance(train, test, split):
    """SMOTE rows must stem from, and only from, the training fold."""
    real = train.row_ids[train.row_ids >= 0]
    if set(real.tolist()) & set(test.row_ids.tolist()):
        raise AssertionError("training fold contains test rows")
    if not set(train.patient_keys.tolist()) <= set(split.train_patients):
        raise AssertionError("training rows carry non-training patient keys")
    assert_disjoint(train, test)


def fit_predict(model, cfg, data, seed):
    """Train one model on ``data.train``; return ``(scores, labels, proba)`` on the test fold."""
    mcfg = cfg.model_config(model, seed)
    train, test = data.train, data.test
    if model == "fcn-ts":
        train, test = train.series_only(), test.series_only()
    if model in ("svm-poly", "svm-rbf"):
        clf = SvmClassifier(mcfg).fit(train.rows, train.labels)
        scores = clf.decision_function(test.rows)
        return scores, (scores > 0).astype(np.int64), None
    if model == "knn-dtw":
        clf = KnnDtwClassifier(mcfg, n_series=VARIANT_LENGTHS["TS"]).fit(train.rows, train.labels)
    elif model in ("fcn-ts", "fcn-tsm"):
        clf = FcnClassifier(mcfg, n_series=VARIANT_LENGTHS["TS"]).fit(train.rows, train.labels)
    elif model == "rf":
        clf = RandomForest(mcfg).fit(train.rows, train.labels)
    elif model == "extra-trees":
        clf = ExtraTrees(mcfg).fit(train.rows, train.labels)
    else:
        clf = GradientBoosting(mcfg).fit(train.rows, train.labels)
    proba = clf.predict_proba(test.rows)
    return proba[:, 1], proba_labels(proba), proba


def load_cohort(cfg, data_path=None):
    if data_path is not None:
        with _stage("load"):
            return load_csv(data_path, "raw")
    if cfg.generator is None:
        raise PipelineError(InvalidConfigError("no --data given and no generator block"), "load")
    with _stage("generate"):
        return generate(cfg.generator)


def run_experiment(cfg, data_path=None, out_dir=None, cohort=None, threads=None):
    """Run the whole pipeline and return an :class:`ExperimentOutput`.

    Parameters
    ----------
    cfg : RunConfig
    data_path : path, optional
        Raw cohort CSV; otherwise ``cfg.generator`` synthesises one.
    out_dir : path, optional
        Where to write results.csv, table1.md, splits.json, rejections.csv
        and manifest.json.
    cohort : Cohort, optional
        Raw cohort already in memory (takes precedence over ``data_path``).
    threads : int, optional
        Worker cap; defaults to ``SOZ_THREADS`` (or 1).
    """
    t_start = time.perf_counter()
    threads = thread_cap() if threads is None else int(threads)
    raw = cohort if cohort is not None else load_cohort(cfg, data_path)
    with _stage("preprocess"):
        cleaned = trim_artifact(raw)
        reasons = artifact_reasons(cleaned, cfg.pipeline.sat_threshold, cfg.pipeline.flat_eps)
        drop = {i for i, _ in reasons}
        cleaned = cleaned.subset([i for i in range(len(cleaned)) if i not in drop])
    with _stage("splits"):
        plan = make_splits(sorted({r.patient_id for r in cleaned.records}),
                           cfg.pipeline.n_splits, cfg.seed)
    fitted = [m for m in cfg.models if m != "soft-ensemble"]
    results, scores = [], {}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for s, split in enumerate(plan):
            data = prepare_split(cleaned, split, s, cfg)
            futures = {m: pool.submit(_run_job, m, cfg, data, s) for m in fitted}
            outputs = {m: futures[m].result() for m in fitted}
            if "soft-ensemble" in cfg.models:
                with _stage("ensemble", s, "soft-ensemble"):
                    proba = soft_ensemble([outputs[m][2] for m in ENSEMBLE_MEMBERS])
                    outputs["soft-ensemble"] = (proba[:, 1], proba_labels(proba), proba)
            y = data.test.labels
            for m in cfg.models:
                sc, lab, _ = outputs[m]
                with _stage("evaluate", s, m):
                    results.append(evaluate(m, s, y, sc, lab))
                scores[s, m] = sc
            del data
    with _stage("aggregate"):
        table = aggregate(results)
    out = ExperimentOutput(table, results, plan, reasons, scores)
    if out_dir is not None:
        with _stage("write"):
            write_outputs(out, cfg, out_dir, threads, time.perf_counter() - t_start)
    return out


def _run_job(model, cfg, data, split):
    with _stage("fit", split, model):
        return fit_predict(model, cfg, data, job_seed(cfg.seed, split, model))


def write_outputs(out, cfg, out_dir, threads, wall):
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_results_csv(out.results, out_dir / "results.csv")
        (out_dir / "table1.md").write_text(out.table.to_markdown(), encoding="utf-8")
        out.plan.write(out_dir / "splits.json")
        write_rejections(out_dir / "rejections.csv", out.rejections)
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "config_hash": cfg.config_hash(),
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "soz_threads": threads,
            "wall_seconds": round(wall, 3),
            "versions": _versions(),
        }
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except IoFailureError:
        raise
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc


def _versions():
    return {
        "ccep_soz": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def configure_logging(level=logging.INFO):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False


def default_config(**overrides):
    """Desk-profile config with the default generator, for demos and tests."""
    base = RunConfig(generator=GenConfig())
    return replace(base, **overrides) if overrides else base

