import numpy as np
import pytest

from igflow import FiniteExpFamily, gamma_model, gaussian_model

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def gaussian():
    return gaussian_model()


@pytest.fixture(scope="session")
def gamma():
    return gamma_model()


@pytest.fixture(scope="session")
def bernoulli():
    return FiniteExpFamily([[0.0], [1.0]])


@pytest.fixture(scope="session")
def k3():
    return FiniteExpFamily([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def suites():
    """run_suite results computed once per session, keyed by (model id, fault)."""
    from igflow import get_model, inject_fault, run_suite

    cache = {}

    def get(model_id, fault=None):
        key = (model_id, fault)
        if key not in cache:
            model = inject_fault(get_model(model_id), fault) if fault else None
            cache[key] = run_suite(model_id, seed=1, model=model)
        return cache[key]

    return get
