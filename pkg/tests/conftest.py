import time

import numpy as np
import pytest

from isac_pcrb.config import default_config
from isac_pcrb.sweep import run_sweep


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def scenario(cfg):
    return cfg.scenario


@pytest.fixture(scope="session")
def mat(scenario):
    return scenario.matrices()


@pytest.fixture(scope="session")
def inst(scenario, mat):
    return scenario.instance(0.0, mat)


@pytest.fixture(scope="session")
def timed_sweep(cfg):
    """The full default sweep (all schemes) and its wall-clock time in seconds."""
    start = time.perf_counter()
    rows = run_sweep(cfg)
    return rows, time.perf_counter() - start


@pytest.fixture(scope="session")
def sweep_rows(timed_sweep):
    return timed_sweep[0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hermitian_psd(rng, n, rank=None):
    k = n if rank is None else rank
    G = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    return G @ G.conj().T
