import numpy as np
import pytest

from restless_oddarm import BanditInstance, canonical_instance

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def report(name: str, passed: bool, detail: str) -> bool:
        _CRITERIA.append((name, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")


@pytest.fixture(scope="session")
def canonical():
    return canonical_instance()


@pytest.fixture(scope="session")
def iid_instance():
    # rows of each matrix coincide, so observations are i.i.d. per arm
    P1 = [[0.8, 0.2], [0.8, 0.2]]
    P2 = [[0.3, 0.7], [0.3, 0.7]]
    return BanditInstance(3, P1, P2, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def solved(canonical):
    """Canonical solution at D=8 for every hypothesis."""
    from restless_oddarm import build_truncated_mdp, solve_rstar

    return [solve_rstar(build_truncated_mdp(canonical, h, 8)) for h in range(canonical.K)]
