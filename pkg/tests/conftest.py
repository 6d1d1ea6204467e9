import math
from pathlib import Path

import numpy as np
import pytest

from fockqkd.fock import JonesPolarization, Photon, PhotonPool, PhotonState, SpectralMode

NETLISTS = Path(__file__).resolve().parents[1] / "src" / "fockqkd" / "netlists"

# criterion number -> summary line, filled by test_acceptance
ACCEPTANCE_LINES = {}


def netlist_text(name):
    return (NETLISTS / name).read_text()


def random_polarization(rng):
    a = rng.uniform(0, 1)
    return JonesPolarization(math.sqrt(a), math.sqrt(1 - a), rng.uniform(-math.pi, math.pi))


def random_spectrum(rng):
    return SpectralMode(rng.uniform(1.0e15, 1.3e15), rng.uniform(1e11, 1e12))


def random_state(rng, routes, **fixed):
    kw = dict(
        route=routes[rng.integers(len(routes))],
        coefficient=rng.normal(),
        delay=rng.uniform(-5e-12, 5e-12),
        phase=rng.uniform(0, 2 * math.pi),
        spectrum=random_spectrum(rng),
        polarization=random_polarization(rng),
    )
    kw.update(fixed)
    return PhotonState(**kw)


def random_photon(rng, routes, n_terms=None, **fixed):
    n_terms = n_terms or int(rng.integers(1, 4))
    return Photon(tuple(random_state(rng, routes, **fixed) for _ in range(n_terms)))


def random_pool(rng, routes, max_photons=3, **fixed):
    n = int(rng.integers(1, max_photons + 1))
    return PhotonPool(tuple(random_photon(rng, routes, **fixed) for _ in range(n)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
