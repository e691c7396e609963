import numpy as np
import pytest

from ecsim.states import PhysicalParams

_ACCEPTANCE = []


@pytest.fixture
def natural():
    """Natural units with unit potential and measurement strengths."""
    return PhysicalParams.natural(mu=1.0, kappa=1.0, kappa_tilde=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(label, passed, detail=""):
        _ACCEPTANCE.append((label, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
