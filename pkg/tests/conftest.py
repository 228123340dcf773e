import numpy as np
import pytest

from cwce_lab import ScmParams


@pytest.fixture
def gaussian():
    return ScmParams.gaussian_lmm()


@pytest.fixture
def truncated():
    return ScmParams.truncated_lmm()


@pytest.fixture
def lognormal():
    return ScmParams.lognormal_lmm()


def mc_within(samples, exact, n_se):
    """True when the sample mean lies within ``n_se`` standard errors of ``exact``."""
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    return abs(samples.mean() - exact) <= n_se * se


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the acceptance summary."""

    def record(criterion: int, passed: bool, detail: str) -> bool:
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
