"""Single-photon and phase-randomized weak-coherent sources."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .errors import CapacityError, InvalidArgumentError
from .fock import H, JonesPolarization, Photon, PhotonPool, PhotonState, SpectralMode

TRUNCATION_HARD_CAP = 170

DEFAULT_SPECTRUM = SpectralMode(2 * math.pi * 193.4e12, 2 * math.pi * 65e9)


@dataclass(frozen=True)
class SourceParams:
    emit_route: str
    kind: str = "single_photon"
    mean_photon_number: float = 0.0
    spectrum: SpectralMode = DEFAULT_SPECTRUM
    polarization: JonesPolarization = H
    repetition_period: float = 1e-8
    phase_randomized: bool = True
    phase: float = 0.0
    delay: float = 0.0
    # truncation inputs; n_t is solved from these unless given explicitly
    session_pulses: int = 1_000_000
    truncation_epsilon: float = 1e-6
    truncation: int | None = None

    def __post_init__(self):
        if self.kind not in ("single_photon", "weak_coherent"):
            raise InvalidArgumentError(f"unknown source kind {self.kind!r}")
        if not self.mean_photon_number >= 0:
            raise InvalidArgumentError("mean photon number must be >= 0")
        if not self.repetition_period > 0:
            raise InvalidArgumentError("repetition period must be > 0")


def _state(params, coefficient, phase):
    return PhotonState(
        route=params.emit_route,
        coefficient=coefficient,
        delay=params.delay,
        phase=phase,
        spectrum=params.spectrum,
        polarization=params.polarization,
    )


@lru_cache(maxsize=256)
def _single_photon(params):
    return (Photon((_state(params, 1.0, params.phase),)),), (f"emit:{params.emit_route}:n=1",)


def emit_single_photon(params):
    """One-photon pool with a single unit-coefficient term."""
    photons, lineage = _single_photon(params)
    return PhotonPool(photons, lineage=lineage)


def _log_pmf(mu, n):
    return -mu + n * math.log(mu) - math.lgamma(n + 1)


def poisson_tail(mu, n):
    """P(N > n) for N ~ Poisson(mu), summed directly over the upper terms."""
    if n < 0:
        return 1.0
    m = n + 1
    log_term = _log_pmf(mu, m)
    if log_term < -745 and m > mu:
        return 0.0
    lead = log_term
    total = 1.0
    ratio_term = 1.0
    while True:
        m += 1
        ratio_term *= mu / m
        total += ratio_term
        if ratio_term < 1e-17 * total and m > mu:
            break
    return math.exp(lead) * total


def exceedance_probability(mu, n_trials, n_t):
    """Probability that at least one of ``n_trials`` pulses holds more than ``n_t`` photons."""
    tail = poisson_tail(mu, n_t)
    if tail >= 1.0:
        return 1.0
    return -math.expm1(n_trials * math.log1p(-tail))


@lru_cache(maxsize=256)
def truncation_point(mu, n_trials, epsilon):
    """Smallest n_t whose session-wide exceedance probability is at most ``epsilon``."""
    if not mu > 0:
        raise InvalidArgumentError(f"truncation needs mu > 0, got {mu}")
    if n_trials < 1:
        raise InvalidArgumentError("need at least one trial")
    if not 0 < epsilon < 1:
        raise InvalidArgumentError("epsilon must lie in (0, 1)")
    bound = math.log1p(-epsilon)
    for n_t in range(TRUNCATION_HARD_CAP + 1):
        tail = poisson_tail(mu, n_t)
        if tail < 1.0 and n_trials * math.log1p(-tail) >= bound:
            return n_t
    raise CapacityError(
        f"no truncation point up to {TRUNCATION_HARD_CAP} for mu={mu}, N={n_trials}, eps={epsilon}",
        TRUNCATION_HARD_CAP,
    )


def sample_poisson(mu, rng):
    """Inverse-CDF Poisson draw from one uniform variate."""
    u = rng.random()
    if mu == 0:
        return 0
    n = 0
    p = math.exp(-mu)
    acc = p
    while u >= acc:
        n += 1
        p *= mu / n
        acc += p
        if p == 0.0 and n > mu:
            break
    return n


def emit_weak_coherent(params, n_t, rng, counter=None):
    """Phase-randomized coherent pulse as a pool of identical photons.

    Draws n ~ Poisson(mu), redrawing while n > n_t (each redraw is counted
    under ``counter["exceedances"]`` when a counter is given), then one
    uniform global phase when the source is phase randomized.  Every photon
    carries coefficient (1/sqrt(n!))**(1/n) so the n-photon product has
    unit norm.
    """
    mu = params.mean_photon_number
    n = sample_poisson(mu, rng)
    while n > n_t:
        if counter is not None:
            counter["exceedances"] += 1
        n = sample_poisson(mu, rng)
    phase = params.phase
    if params.phase_randomized:
        phase = 2 * math.pi * rng.random()
    if n == 0:
        return PhotonPool((), lineage=(f"emit:{params.emit_route}:n=0",))
    coeff = math.exp(-0.5 * math.lgamma(n + 1) / n)
    state = _state(params, coeff, phase)
    photons = tuple(Photon((state,)) for _ in range(n))
    return PhotonPool(photons, lineage=(f"emit:{params.emit_route}:n={n}:phase={phase!r}",))


def emit(params, rng, counter=None):
    """Dispatch on the source kind."""
    if params.kind == "single_photon":
        return emit_single_photon(params)
    n_t = params.truncation
    if n_t is None:
        n_t = (
            truncation_point(params.mean_photon_number, params.session_pulses, params.truncation_epsilon)
            if params.mean_photon_number > 0
            else 0
        )
    return emit_weak_coherent(params, n_t, rng, counter)
