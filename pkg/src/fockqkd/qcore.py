"""Photon-number statistics, projective collapse and pool merging.

Per-route photon-number probabilities come from a generating function:
with ``on`` the Gram matrix restricted to the measured route(s) and
``off`` the remainder, ``perm(off + x * on)`` is a polynomial whose
coefficient of ``x**k`` is the norm of the component with exactly ``k``
photons on the route.  Cross terms between different photon-to-route
assignments (HOM bunching) are therefore included exactly.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateStateError, InvalidArgumentError
from .fock import (
    DEFAULT_PHOTON_CAP,
    Photon,
    PhotonPool,
    _check_cap,
    normalize_pool,
    permanent,
    split_gram,
)

PROB_TOL = 1e-9


@dataclass(frozen=True)
class NumberDistribution:
    route: str
    probabilities: tuple

    def __post_init__(self):
        total = sum(self.probabilities)
        if any(p < -PROB_TOL or p > 1 + PROB_TOL for p in self.probabilities):
            raise ArithmeticError(f"probability out of range on {self.route}: {self.probabilities}")
        if abs(total - 1.0) > PROB_TOL:
            raise ArithmeticError(f"distribution on {self.route} sums to {total}")
        clamped = tuple(min(1.0, max(0.0, p)) for p in self.probabilities)
        object.__setattr__(self, "probabilities", clamped)

    def __getitem__(self, k):
        return self.probabilities[k] if 0 <= k < len(self.probabilities) else 0.0

    def mean(self):
        return sum(k * p for k, p in enumerate(self.probabilities))


@dataclass(frozen=True)
class CollapseOutcome:
    detected_count: int
    removed_photon_ids: tuple
    surviving_pool: PhotonPool


def _poly_permanent(off, on, cap):
    """Coefficients of perm(off + x on) in x, lowest order first."""
    n = off.shape[0]
    if n == 0:
        return np.array([1.0 + 0j])
    if n == 1:
        return np.array([off[0, 0], on[0, 0]])
    if n == 2:
        c0 = off[0, 0] * off[1, 1] + off[0, 1] * off[1, 0]
        c1 = (
            off[0, 0] * on[1, 1]
            + on[0, 0] * off[1, 1]
            + off[0, 1] * on[1, 0]
            + on[0, 1] * off[1, 0]
        )
        c2 = on[0, 0] * on[1, 1] + on[0, 1] * on[1, 0]
        return np.array([c0, c1, c2])
    m = n + 1
    roots = np.exp(2j * np.pi * np.arange(m) / m)
    values = np.array([permanent(off + x * on, cap) for x in roots])
    return np.fft.fft(values) / m


def _normalized(coeffs, what):
    total = coeffs.sum().real
    if not total > 1e-300:
        raise DegenerateStateError(f"{what}: pool has zero norm")
    imag = np.abs(coeffs.imag).max()
    if imag > 1e-9 * total:
        raise ArithmeticError(f"{what}: imaginary residue {imag:.3e}")
    return coeffs.real / total


@lru_cache(maxsize=1 << 14)
def _route_distribution(photons, route, cap):
    on, off = split_gram(photons, (route,))
    probs = _normalized(_poly_permanent(off, on, cap), f"route {route}")
    return NumberDistribution(route, tuple(float(p) for p in probs))


def route_number_distribution(pool, route, cap=DEFAULT_PHOTON_CAP):
    """Distribution of the number of photons found on ``route``."""
    _check_cap(pool, cap)
    return _route_distribution(pool.photons, route, cap)


def joint_number_distribution(pool, routes, cap=DEFAULT_PHOTON_CAP):
    """Joint photon-number distribution over several routes.

    Returns an array indexed ``[k_1, ..., k_D]``.  Uses the multivariate
    generating function evaluated on a grid of roots of unity.
    """
    _check_cap(pool, cap)
    routes = tuple(routes)
    n = len(pool.photons)
    d = len(routes)
    if d == 0:
        raise InvalidArgumentError("need at least one route")
    if len(set(routes)) != d:
        raise InvalidArgumentError("routes must be distinct")
    parts = [split_gram(pool.photons, (r,))[0] for r in routes]
    _, off = split_gram(pool.photons, routes)
    m = n + 1
    roots = np.exp(2j * np.pi * np.arange(m) / m)
    values = np.empty((m,) * d, dtype=complex)
    for idx in itertools.product(range(m), repeat=d):
        mat = off.copy()
        for r, j in enumerate(idx):
            mat = mat + roots[j] * parts[r]
        values[idx] = permanent(mat, cap)
    # grid values are sums over x^k with x = exp(2 pi i j / m); fftn inverts that
    coeffs = np.fft.fftn(values) / m**d
    probs = _normalized(coeffs, "joint distribution")
    return np.clip(probs, 0.0, 1.0)


def sample_count(dist, rng):
    """Inverse-CDF draw of a photon number using one uniform variate."""
    u = rng.random()
    acc = 0.0
    last = 0
    for k, p in enumerate(dist.probabilities):
        if p <= 0.0:
            continue
        acc += p
        last = k
        if u < acc:
            return k
    return last


def _subset_weights(photons, route, k, cap):
    on, off = split_gram(photons, (route,))
    n = len(photons)
    subsets, weights = [], []
    for subset in itertools.combinations(range(n), k):
        rest = [i for i in range(n) if i not in subset]
        w = permanent(on[np.ix_(subset, subset)], cap) * permanent(off[np.ix_(rest, rest)], cap)
        subsets.append(subset)
        weights.append(max(0.0, w.real))
    return subsets, weights


@lru_cache(maxsize=1 << 14)
def _collapse_plan(photons, route, k, cap):
    """(subsets, cumulative probabilities) for choosing the detected photons; None if degenerate."""
    subsets, weights = _subset_weights(photons, route, k, cap)
    total = sum(weights)
    if not total > 1e-300:
        return None
    keep = [(s, w) for s, w in zip(subsets, weights) if w > 0]
    cumulative = np.cumsum([w for _, w in keep]) / total
    return tuple(s for s, _ in keep), tuple(cumulative)


@lru_cache(maxsize=1 << 14)
def _survivors(photons, route, chosen, cap):
    survivors = []
    for i, photon in enumerate(photons):
        if i in chosen:
            continue
        states = tuple(s for s in photon.states if s.route != route)
        if not states:
            raise DegenerateStateError(f"photon {i} lies wholly on {route} but was not detected")
        survivors.append(Photon(states))
    if not survivors:
        return ()
    return normalize_pool(PhotonPool(tuple(survivors), pool_id=0), cap).photons


def collapse(pool, route, k, rng, cap=DEFAULT_PHOTON_CAP):
    """Project ``pool`` onto ``k`` photons on ``route`` and drop the route.

    The detected photons are chosen as a size-``k`` subset with probability
    proportional to that subset's diagonal weight: the norm of the term in
    which exactly those photons sit on the route and the others do not.
    Survivors lose every term on the route and the pool is renormalized.
    One uniform variate is consumed.
    """
    _check_cap(pool, cap)
    n = len(pool.photons)
    if not 0 <= k <= n:
        raise InvalidArgumentError(f"cannot detect {k} photons from a pool of {n}")
    plan = _collapse_plan(pool.photons, route, k, cap)
    u = rng.random()
    if plan is None:
        raise DegenerateStateError(
            f"pool {pool.pool_id}: no component with {k} photon(s) on {route}"
        )
    subsets, cumulative = plan
    idx = min(bisect.bisect_right(cumulative, u), len(subsets) - 1)
    chosen = subsets[idx]
    try:
        survivors = _survivors(pool.photons, route, chosen, cap)
    except DegenerateStateError as exc:
        raise DegenerateStateError(f"pool {pool.pool_id}: {exc}") from None
    note = f"collapse:{route}:k={k}:S={','.join(map(str, chosen))}"
    return CollapseOutcome(k, chosen, pool.with_photons(survivors, note))


def merge_pools(a, b):
    """Product of two independent pools under a fresh identifier."""
    if a.pool_id == b.pool_id:
        raise InvalidArgumentError(f"cannot merge pool {a.pool_id} with itself")
    if not a.photons:
        return b
    if not b.photons:
        return a
    return PhotonPool(
        a.photons + b.photons,
        lineage=a.lineage + b.lineage + (f"merge:{a.pool_id}+{b.pool_id}",),
    )
