import numpy as np
import pytest

from fairrmab.core import RmabInstance, TransitionModel
from fairrmab.datasets import SyntheticSpec, generate_synthetic


def make_arm(p00, p01, p10, p11):
    """Arm from to-good probabilities: passive (from 0, from 1), active (from 0, from 1)."""
    return TransitionModel.from_to_good((p00, p01), (p10, p11))


@pytest.fixture
def reference_arm():
    return make_arm(0.2, 0.6, 0.5, 0.9)


@pytest.fixture
def small_instance():
    return generate_synthetic(SyntheticSpec(n=5, seed=11, k=2, T=6, gamma=0.9))


def random_instance(seed, n, k=1, T=5, gamma=0.9, c=1.0) -> RmabInstance:
    return generate_synthetic(SyntheticSpec(n=n, seed=seed, k=k, T=T, gamma=gamma, c=c))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
