import json

import pytest

from ccep_soz.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from ccep_soz.dataset import load_csv

from test_experiment import TINY


def _write(path, data):
    path.write_text(json.dumps(data))
    return path


def test_generate_run_report(tmp_path, capsys):
    cfg = dict(TINY, models=["rf", "gbdt-x"])
    cfg_path = _write(tmp_path / "c.json", cfg)
    data = tmp_path / "data.csv"
    assert main(["generate", "--config", str(cfg_path), "--out", str(data)]) == EXIT_OK
    assert len(load_csv(data)) > 0
    out_dir = tmp_path / "out"
    assert main(["-q", "run", "--config", str(cfg_path), "--data", str(data),
                 "--out-dir", str(out_dir)]) == EXIT_OK
    table = capsys.readouterr().out
    assert "| Random Forest |" in table and "| XGBoost |" in table
    assert (out_dir / "table1.md").read_text() == table
    assert main(["report", "--results", str(out_dir / "results.csv"), "--format", "md"]) == EXIT_OK
    assert capsys.readouterr().out == table
    assert main(["report", "--results", str(out_dir / "results.csv"), "--format", "csv"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("model,Macro Precision,Macro Recall,ROC AUC,Accuracy\n")


def test_overrides_reach_the_manifest(tmp_path):
    cfg_path = _write(tmp_path / "c.json", dict(TINY, models=["rf"]))
    out_dir = tmp_path / "out"
    assert main(["-q", "run", "--config", str(cfg_path), "--out-dir", str(out_dir),
                 "--seed", "9", "--smote-k", "3", "--smoothing-m", "5"]) == EXIT_OK
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["seed"] == 9
    assert manifest["config"]["pipeline"]["smote_k"] == 3
    assert manifest["config"]["pipeline"]["smoothing_m"] == 5.0


@pytest.mark.parametrize("bad", [
    {"schema_version": 2},
    {"schema_version": 1, "models": ["nope"]},
    {"schema_version": 1, "rf": {"n_estimators": 0}, "models": ["rf"]},
])
def test_bad_config_is_a_validation_error(tmp_path, bad):
    cfg_path = _write(tmp_path / "c.json", bad)
    assert main(["-q", "run", "--config", str(cfg_path), "--out-dir", str(tmp_path)]) == EXIT_VALIDATION


def test_malformed_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert main(["-q", "run", "--config", str(p), "--out-dir", str(tmp_path)]) == EXIT_VALIDATION


def test_too_few_patients_exit_code(tmp_path):
    cfg = dict(TINY, models=["rf"],
               generator={"n_patients": 2, "electrodes_per_patient_range": [4, 4]})
    cfg_path = _write(tmp_path / "c.json", cfg)
    assert main(["-q", "run", "--config", str(cfg_path), "--out-dir", str(tmp_path)]) == EXIT_VALIDATION


def test_missing_files_are_runtime_failures(tmp_path):
    assert main(["-q", "run", "--config", str(tmp_path / "none.json"),
                 "--out-dir", str(tmp_path)]) == EXIT_RUNTIME
    assert main(["-q", "report", "--results", str(tmp_path / "none.csv")]) == EXIT_RUNTIME


def test_bad_thread_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("SOZ_THREADS", "0")
    cfg_path = _write(tmp_path / "c.json", dict(TINY, models=["rf"]))
    assert main(["-q", "run", "--config", str(cfg_path), "--out-dir", str(tmp_path)]) == EXIT_VALIDATION


def test_missing_data_file(tmp_path):
    cfg_path = _write(tmp_path / "c.json", dict(TINY, models=["rf"]))
    rc = main(["-q", "run", "--config", str(cfg_path), "--data", str(tmp_path / "x.csv"),
               "--out-dir", str(tmp_path)])
    assert rc == EXIT_RUNTIME


def test_generate_rejects_bad_block(tmp_path):
    cfg_path = _write(tmp_path / "g.json", {"generator": {"soz_fraction": 0.9}})
    assert main(["-q", "generate", "--config", str(cfg_path), "--out", str(tmp_path / "d.csv")]) == EXIT_VALIDATION
