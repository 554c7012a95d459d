import numpy as np
import pytest

from photon_src.qmodel import LevelScheme, LinearPulse, SystemParams

FOUR = LevelScheme.FOUR_LEVEL
THREE = LevelScheme.THREE_LEVEL


@pytest.fixture
def baseline():
    """Four-level Fig. 2 baseline at Omega_2 = 3.2."""
    return SystemParams.fig2_baseline(3.2)


@pytest.fixture
def baseline3():
    return SystemParams.fig2_baseline(scheme=THREE)


@pytest.fixture
def pulse07():
    return LinearPulse(0.07)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_params(rng, scheme=FOUR, extended=False, detuned=True):
    """A random valid parameter set with every decay strictly positive."""
    kw = dict(
        g=rng.uniform(0.3, 2.0),
        kappa_ex=rng.uniform(0.01, 1.0),
        kappa_in=rng.uniform(0.0, 0.1),
        gamma_u=rng.uniform(0.01, 0.5),
        gamma_o=rng.uniform(0.0, 0.1),
    )
    if detuned:
        kw["delta_e"] = rng.uniform(-2.0, 2.0)
    if scheme is FOUR:
        kw["omega2"] = rng.uniform(0.2, 10.0)
        if detuned:
            kw["delta_e2"] = rng.uniform(-2.0, 2.0)
        if extended:
            kw["gamma_o2"] = rng.uniform(0.0, 0.05)
            kw["gamma_e"] = rng.uniform(0.0, 0.05)
    return SystemParams(**kw)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
