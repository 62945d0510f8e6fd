import numpy as np
import pytest

from mbridge import GeneratorSpec, generate_instance, make_instance, validate_measure


def pair(mu_atoms, mu_w, nu_atoms, nu_w, name=None):
    return make_instance(validate_measure(mu_atoms, mu_w), validate_measure(nu_atoms, nu_w), name)


@pytest.fixture
def two_point():
    """mu = (d(-1/4) + d(1/4))/2, nu = (d(-1/2) + d(1/2))/2."""
    return pair([-0.25, 0.25], [0.5, 0.5], [-0.5, 0.5], [0.5, 0.5], "two-point")


@pytest.fixture(scope="session")
def small_generated():
    return [generate_instance(GeneratorSpec(seed, 4 + seed, 6 + 2 * seed)) for seed in range(4)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""

    def record(number, passed, detail):
        _ACCEPTANCE.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
