from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from memfpk.linear import LinearParams
from memfpk.models import GaussianInit, builtin

settings.register_profile(
    "repo", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

EX1_INIT = GaussianInit((-1.0, -1.0), 0.15)


@pytest.fixture(scope="session")
def ex1_params() -> LinearParams:
    return LinearParams(k=1.0, c=0.4, sigma=1.0, hurst=0.8, init=EX1_INIT)


@pytest.fixture(scope="session")
def linear_model():
    return builtin("linear_sdof", {"k": 1.0, "c": 0.4}, sigma=1.0, hurst=0.8, init=EX1_INIT)


@pytest.fixture(scope="session")
def duffing_model():
    return builtin("duffing", {"eta": 1.0, "alpha": -1.0, "beta": 1.0}, sigma=0.6, hurst=0.65,
                   init=GaussianInit((0.0, 0.0), 0.05))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# --- acceptance reporting --------------------------------------------------------

_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion(capsys):
    """Record one PASS/FAIL line; the lines are echoed live and summarized at the end."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
