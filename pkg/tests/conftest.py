import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sfselect.data import Dataset, SyntheticConfig, generate_synthetic
from sfselect.features import FEATURE_NAMES

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def synth_small() -> Dataset:
    return generate_synthetic(SyntheticConfig(n_rows=1500, seed=11))


@pytest.fixture(scope="session")
def synth_20k() -> Dataset:
    return generate_synthetic(SyntheticConfig(n_rows=20_000, seed=7))


def make_dataset(X, y, columns=None) -> Dataset:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    cols = tuple(columns or FEATURE_NAMES[: X.shape[1]])
    return Dataset(cols, X, np.asarray(y, dtype=np.int64))


# one PASS/FAIL line per acceptance criterion, printed after the test run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
