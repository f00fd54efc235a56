import numpy as np
import pytest

from metastable.density import EXAMPLE_WEIGHTS
from metastable.experiments import MapFamily
from metastable.transfer import stationary_density, ulam_matrix


@pytest.fixture(scope="session")
def example():
    return MapFamily(EXAMPLE_WEIGHTS, 0.4, 2.0)


@pytest.fixture(scope="session")
def two_cell():
    return MapFamily([0.5, 0.5], 0.5, 2.0)


@pytest.fixture(scope="session")
def example_system(example):
    return example.system(0.02, 0.02)


@pytest.fixture(scope="session")
def example_ulam(example_system):
    return stationary_density(ulam_matrix(example_system.perturbed, 2000))


def random_weights(rng, n, zeros=True):
    v = rng.random(n)
    if zeros and n > 2:
        v[rng.random(n) < 0.2] = 0.0
    # a single nonzero cell would force m[i][i] = 1, a slope-one branch
    if np.count_nonzero(v) < 2:
        v[:2] = rng.random(2) + 0.1
    return v / v.sum()


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
