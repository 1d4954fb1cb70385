import numpy as np
import pytest
from hypothesis import settings

from pblsgmm.simulation.design import build_condition, generate_dataset

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def condition():
    return build_condition(1, 1.0, 0.0, 1.0, -0.3)


@pytest.fixture(scope="session")
def small_dataset(condition):
    from dataclasses import replace

    return generate_dataset(replace(condition, n=200), 11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
