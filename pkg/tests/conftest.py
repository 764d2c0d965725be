import numpy as np
import pytest

from hybridchain.config import config_from_dict


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    """A run that finishes in well under a second."""
    return config_from_dict(
        {
            "seed": 3,
            "workload": {"gamma": 600, "duration": 0.25},
            "protocol": {"M": 12, "f": 1},
            "bootstrap": {"training_size": 2000, "heldout_size": 500},
        }
    )


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL line per acceptance criterion for the run summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
