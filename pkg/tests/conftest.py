import numpy as np
import pytest

import ssrlab as sl


def zoo_models(d=60):
    """The covariance families exercised by the cross-cutting invariants."""
    models = [("identity", sl.build_covariance("identity", d))]
    for theta in (0.5, 1.0, 5.0):
        models.append((f"spiked{theta}",
                       sl.build_covariance("spiked", d, theta=theta, seed=3)))
    for rho in (0.3, 0.9):
        models.append((f"toeplitz{rho}", sl.build_covariance("toeplitz", d, rho=rho)))
    for beta in (0.5, 2.0):
        models.append((f"power{beta}", sl.build_covariance("power_law", d, beta=beta)))
    return models


@pytest.fixture(scope="session")
def zoo():
    return zoo_models()


@pytest.fixture
def rng0():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    import sys

    for name in ("test_acceptance", "tests.test_acceptance"):
        module = sys.modules.get(name)
        results = getattr(module, "RESULTS", None)
        if results:
            terminalreporter.section("acceptance criteria")
            for line in results:
                terminalreporter.write_line(line)
            return
