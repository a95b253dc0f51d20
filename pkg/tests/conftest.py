import numpy as np
import pytest

from zexplore.likelihood import Family, UnitObservations

ACCEPTANCE_LINES: list[str] = []


def random_binomial_cohort(rng, n_units=None, max_trials=30):
    n_units = n_units or int(rng.integers(2, 9))
    units = []
    for i in range(n_units):
        n = int(rng.integers(1, max_trials + 1))
        units.append(UnitObservations(f"u{i}", successes=int(rng.integers(0, n + 1)), trials=n))
    return units, Family.binomial()


def random_multinomial_cohort(rng, n_units=None, max_count=10):
    n_units = n_units or int(rng.integers(2, 9))
    k = int(rng.integers(2, 5))
    units = []
    for i in range(n_units):
        c = rng.integers(0, max_count + 1, size=k)
        if c.sum() == 0:
            c[rng.integers(k)] = 1
        units.append(UnitObservations(f"u{i}", counts=tuple(int(v) for v in c)))
    return units, Family.multinomial([f"c{j}" for j in range(k)])


@pytest.fixture
def rng():
    return np.random.default_rng(20110601)


def binom_units(pairs, **cov):
    return [UnitObservations(f"u{i}", successes=y, trials=n, covariates=cov)
            for i, (y, n) in enumerate(pairs)]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
