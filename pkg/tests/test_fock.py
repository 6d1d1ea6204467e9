import cmath
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fockqkd.errors import CapacityError, InvalidArgumentError
from fockqkd.fock import (
    H,
    V,
    JonesPolarization,
    Photon,
    PhotonPool,
    PhotonState,
    SpectralMode,
    configuration_inner,
    configuration_norm,
    gram,
    merge_duplicate_states,
    normalize_pool,
    permanent,
    permanent_naive,
    polarization_overlap,
    pool_norm,
    spectral_overlap,
    state_overlap,
    total_norm,
)

from conftest import random_pool, random_state


def quad_overlap(s1, tau1, s2, tau2):
    """Adaptive quadrature of phi1 phi2 exp(-i w dt), in units of the wider sigma around the centre."""
    dt = tau2 - tau1
    centre = 0.5 * (s1.mu + s2.mu)
    scale = max(s1.sigma, s2.sigma)
    lo = (min(s1.mu - 12 * s1.sigma, s2.mu - 12 * s2.sigma) - centre) / scale
    hi = (max(s1.mu + 12 * s1.sigma, s2.mu + 12 * s2.sigma) - centre) / scale
    k = scale * dt

    def integrand(u, part):
        w = centre + u * scale
        amp = s1.amplitude(w) * s2.amplitude(w) * scale
        return amp * (math.cos(k * u) if part == 0 else -math.sin(k * u))

    peaks = sorted({(s1.mu - centre) / scale, (s2.mu - centre) / scale})
    opts = dict(points=peaks, limit=4000, epsabs=1e-13, epsrel=1e-11)
    re = integrate.quad(integrand, lo, hi, args=(0,), **opts)[0]
    im = integrate.quad(integrand, lo, hi, args=(1,), **opts)[0]
    return complex(re, im) * cmath.exp(-1j * centre * dt)


def random_mode_pair(rng):
    """Widths log-uniform over 1e9..1e12 rad/s, centres a couple of widths apart."""
    sig1, sig2 = 10 ** rng.uniform(9, 12, 2)
    s1 = SpectralMode(rng.uniform(1.0e15, 1.3e15), sig1)
    s2 = SpectralMode(s1.mu + rng.normal(0, 2 * max(sig1, sig2)), sig2)
    return s1, s2


def test_spectral_overlap_identical_modes_is_one():
    s = SpectralMode(2 * math.pi * 193.4e12, 2 * math.pi * 65e9)
    assert spectral_overlap(s, 0.0, s, 0.0) == 1.0


def test_spectral_overlap_delay_magnitude():
    s = SpectralMode(1.2e15, 4e11)
    dt = 3e-12
    assert abs(spectral_overlap(s, 0.0, s, dt)) == pytest.approx(math.exp(-0.5 * (4e11 * dt) ** 2), abs=1e-15)


def test_spectral_overlap_matches_quadrature(rng):
    for _ in range(60):
        s1, s2 = random_mode_pair(rng)
        t1, t2 = rng.uniform(-50e-12, 50e-12, 2)
        assert abs(spectral_overlap(s1, t1, s2, t2) - quad_overlap(s1, t1, s2, t2)) < 1e-9


def test_spectral_overlap_unequal_widths():
    s1 = SpectralMode(1.2e15, 3e11)
    s2 = SpectralMode(1.2e15, 6e11)
    assert abs(spectral_overlap(s1, 0.0, s2, 0.0) - quad_overlap(s1, 0.0, s2, 0.0)) < 1e-9


def test_spectral_mode_validation():
    with pytest.raises(InvalidArgumentError):
        SpectralMode(1e15, 0.0)
    with pytest.raises(InvalidArgumentError):
        SpectralMode(-1.0, 1e11)


def test_polarization_overlap_orthogonal_and_linear():
    assert polarization_overlap(H, V) == 0
    a = JonesPolarization.linear(0.3)
    b = JonesPolarization.linear(1.0)
    assert abs(polarization_overlap(a, b)) == pytest.approx(abs(math.cos(0.7)), abs=1e-15)
    neg = JonesPolarization.linear(-0.4)
    assert abs(polarization_overlap(H, neg)) == pytest.approx(math.cos(0.4))


def test_jones_validation():
    with pytest.raises(InvalidArgumentError):
        JonesPolarization(0.5, 0.5, 0.0)
    with pytest.raises(InvalidArgumentError):
        JonesPolarization(-1.0, 0.0, 0.0)


def test_from_vector_round_trip(rng):
    for _ in range(50):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        pol, ref = JonesPolarization.from_vector(complex(v[0]), complex(v[1]))
        assert np.allclose(cmath.exp(1j * ref) * pol.vector(), v, atol=1e-12)


def test_phase_canonicalization_keeps_amplitude():
    s = PhotonState("r", coefficient=0.5, phase=4.0)
    assert 0 <= s.phase < math.pi
    assert s.coefficient * cmath.exp(1j * s.phase) == pytest.approx(0.5 * cmath.exp(4.0j))


def test_merge_duplicate_states_sums_coefficients():
    a = PhotonState("r", coefficient=0.3)
    b = PhotonState("r", coefficient=0.4)
    c = PhotonState("r", coefficient=-0.3)
    merged = merge_duplicate_states([a, b, c])
    assert len(merged) == 1 and merged[0].coefficient == pytest.approx(0.4)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_state_overlap_hermitian(seed):
    rng = np.random.default_rng(seed)
    a = random_state(rng, ["r"])
    b = random_state(rng, ["r"])
    assert state_overlap(a, b) == pytest.approx(state_overlap(b, a).conjugate(), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gram_hermitian_and_cauchy_schwarz(seed):
    rng = np.random.default_rng(seed)
    pool = random_pool(rng, ["r", "s"], max_photons=4)
    g = gram(pool.photons)
    assert np.allclose(g, g.conj().T, atol=1e-12)
    d = np.real(np.diag(g))
    for i, j in itertools.product(range(len(d)), repeat=2):
        assert abs(g[i, j]) ** 2 <= d[i] * d[j] * (1 + 1e-9) + 1e-15
    assert np.all(np.linalg.eigvalsh(g) > -1e-9)


@pytest.mark.parametrize("n", range(0, 8))
def test_permanent_matches_naive(n, rng):
    for _ in range(5):
        m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        expected = permanent_naive(m)
        assert abs(permanent(m) - expected) <= 1e-10 * max(1.0, abs(expected))


def test_permanent_known_values():
    assert permanent(np.ones((3, 3))) == pytest.approx(6)
    assert permanent(np.eye(4)) == pytest.approx(1)
    assert permanent(np.array([[1, 2], [3, 4]])) == pytest.approx(10)


def test_permanent_cap():
    with pytest.raises(CapacityError):
        permanent(np.ones((9, 9)), cap=8)


def test_configuration_inner_length_mismatch():
    with pytest.raises(InvalidArgumentError):
        configuration_inner([PhotonState("r")], [])


def test_pool_norm_matches_configuration_sum(rng):
    for _ in range(30):
        pool = random_pool(rng, ["r", "s", "loss:x:a"], max_photons=3)
        assert pool_norm(pool) == pytest.approx(configuration_norm(pool), rel=1e-9, abs=1e-12)
        assert total_norm(pool) == pytest.approx(configuration_norm(pool, include_loss=True), rel=1e-9, abs=1e-12)


def test_hom_pool_norm_two_identical_photons():
    p = Photon((PhotonState("a"),))
    q = Photon((PhotonState("a"),))
    # |1_a 1_a> = a^dag a^dag |0> has norm 2
    assert pool_norm(PhotonPool((p, q))) == pytest.approx(2.0)


def test_normalize_pool(rng):
    pool = random_pool(rng, ["r", "s"], max_photons=3)
    assert total_norm(normalize_pool(pool)) == pytest.approx(1.0, abs=1e-12)


def test_pool_norm_excludes_loss_routes():
    photon = Photon((PhotonState("r", coefficient=math.sqrt(0.5)), PhotonState("loss:att:in", coefficient=math.sqrt(0.5))))
    pool = PhotonPool((photon,))
    assert pool_norm(pool) == pytest.approx(0.5)
    assert total_norm(pool) == pytest.approx(1.0)
