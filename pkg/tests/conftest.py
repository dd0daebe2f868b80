import numpy as np
import pytest

from crprecoder import Scenario, build_zf_context, generate_channels


def random_complex(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_pd(rng, n, floor=0.1):
    A = random_complex(rng, (n, n))
    return A @ A.conj().T + floor * np.eye(n)


def random_psd(rng, n, rank=None):
    A = random_complex(rng, (n, rank if rank is not None else n))
    return A @ A.conj().T


def instance(scenario, trial=0):
    """(scenario, channels, ZF context) for one trial."""
    ch = generate_channels(scenario, trial)
    return scenario, ch, build_zf_context(scenario, ch)


def db(x):
    return 10.0 ** (x / 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def small_scenario():
    return Scenario.uniform(6, 2, 1, P=10.0, I=2.0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
