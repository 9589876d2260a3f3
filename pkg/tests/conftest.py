import numpy as np
import pytest

from lqpoison.config import load_bundled
from lqpoison.data import simulate_zoh
from lqpoison.pipeline import run_attack, run_learner


@pytest.fixture(scope="session")
def case1():
    scenario, _ = load_bundled("case1")
    return scenario


@pytest.fixture(scope="session")
def case2():
    scenario, _ = load_bundled("case2")
    return scenario


@pytest.fixture(scope="session")
def case1_data(case1):
    return simulate_zoh(case1.system, case1.excitation, case1.N)


@pytest.fixture(scope="session")
def case2_data(case2):
    return simulate_zoh(case2.system, case2.excitation, case2.N)


@pytest.fixture(scope="session")
def case1_attack(case1, case1_data):
    return run_attack(case1_data, case1.Ktarget, case1.admm)


@pytest.fixture(scope="session")
def case1_clean_learner(case1, case1_data):
    return run_learner(case1_data, case1.system.Q, case1.system.R)


def random_stabilizable(rng, n=None, m=None):
    """Random (A, B, Q, R) with PSD Q and PD R; controllable almost surely."""
    n = n or int(rng.integers(2, 5))
    m = m or int(rng.integers(1, 3))
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    Qr = rng.normal(size=(n, n))
    Rr = rng.normal(size=(m, m))
    return A, B, Qr @ Qr.T, Rr @ Rr.T + np.eye(m)
