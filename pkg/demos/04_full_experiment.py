"""The whole pipeline through ``run_experiment``, as the CLI runs it.

Uses ``demos/desk.json``: a reduced cohort and the desk profile, minus
KNN, whose DTW scan dominates run time. Outputs land in ``demo_results/``;
the run takes about 12 minutes on one core.
"""
import logging
from pathlib import Path

from ccep_soz.experiment import RunConfig, configure_logging, run_experiment

configure_logging(logging.INFO)
cfg = RunConfig.load(Path(__file__).with_name("desk.json"))
out = run_experiment(cfg, out_dir="demo_results")
print(out.table.to_markdown())
print("files:", sorted(p.name for p in Path("demo_results").iterdir()))
