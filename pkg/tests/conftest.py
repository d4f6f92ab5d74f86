import numpy as np
import pytest

from ccep_soz.dataset import to_matrix
from ccep_soz.preprocess import apply_encoder, fit_encoder, trim_artifact
from ccep_soz.synth import GenConfig, generate


@pytest.fixture(scope="session")
def small_cohort():
    """Seven small patients, raw stage."""
    return generate(GenConfig(n_patients=7, electrodes_per_patient_range=(5, 7),
                              soz_fraction=0.25, seed=11))


@pytest.fixture(scope="session")
def small_matrix(small_cohort):
    cleaned = trim_artifact(small_cohort)
    enc = fit_encoder(cleaned, m=20)
    return to_matrix(apply_encoder(enc, cleaned))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion and return the outcome."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
