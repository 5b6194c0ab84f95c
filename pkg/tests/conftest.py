import numpy as np
import pytest

from fracfree.config import standard_config
from fracfree.solver import ContinuationSchedule, SolveConfig, build_problem, continuation_solve

# criterion lines collected by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def standard_1d():
    """Standard 1D scenario at N = 201, solved at a single epsilon."""
    cfg = standard_config(1)
    problem = build_problem(cfg.scenario())
    u, report = continuation_solve(problem, ContinuationSchedule(epsilon_grid=(0.1,)), SolveConfig())
    return problem, u, report
