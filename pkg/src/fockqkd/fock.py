"""Photon-state data model and exact bosonic inner products.

A photon is a superposition of wavepacket terms (:class:`PhotonState`); a
pool is a product of photons.  Multi-photon inner products are permanents
of the photon Gram matrix, which is the multilinear collapse of the sum
over per-photon term choices.

Amplitude lost in a device is kept as explicit terms on *loss routes*
(route ids starting with ``"loss:"``) so the full pool stays an isometric
image of its source; :func:`pool_norm` reports the part of the norm with
no photon lost, :func:`total_norm` the whole thing.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import CapacityError, DegenerateStateError, InvalidArgumentError

DEFAULT_PHOTON_CAP = 8
COEFF_DROP = 1e-12
LOSS_PREFIX = "loss:"

_TWO_PI = 2.0 * math.pi


def is_loss_route(route):
    return route.startswith(LOSS_PREFIX)


@dataclass(frozen=True)
class SpectralMode:
    """Gaussian spectral amplitude, centre ``mu`` and width ``sigma`` in rad/s."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise InvalidArgumentError("spectral parameters must be finite")
        if self.sigma <= 0 or self.mu <= 0:
            raise InvalidArgumentError(f"need mu > 0 and sigma > 0, got {self.mu}, {self.sigma}")

    def amplitude(self, omega):
        """Spectral amplitude at ``omega`` (square-integrates to one)."""
        return np.exp(-((omega - self.mu) ** 2) / (4 * self.sigma**2)) / (
            (2 * math.pi) ** 0.25 * math.sqrt(self.sigma)
        )


@dataclass(frozen=True)
class JonesPolarization:
    """Jones vector (alpha, beta * exp(-i delta_phase))."""

    alpha: float = 1.0
    beta: float = 0.0
    delta_phase: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgumentError("Jones amplitudes must be non-negative")
        if abs(self.alpha**2 + self.beta**2 - 1.0) > 1e-9:
            raise InvalidArgumentError(
                f"Jones vector not normalized: alpha={self.alpha}, beta={self.beta}"
            )

    @classmethod
    def from_vector(cls, h, v):
        """Encode a complex Jones vector; returns (polarization, global phase).

        The global phase is what must be added to a state's ``phase`` so the
        encoded term reproduces ``(h, v)`` exactly.
        """
        norm = math.hypot(abs(h), abs(v))
        if norm == 0:
            raise InvalidArgumentError("zero Jones vector")
        h, v = h / norm, v / norm
        ref = cmath.phase(h) if abs(h) > 1e-15 else cmath.phase(v)
        alpha, beta = abs(h), abs(v)
        delta = 0.0 if beta < 1e-15 or alpha < 1e-15 else _wrap(ref - cmath.phase(v))
        alpha, beta = _renorm(alpha, beta)
        return cls(alpha, beta, delta), ref

    @classmethod
    def linear(cls, angle):
        """Linear polarization at ``angle`` from horizontal (global sign dropped)."""
        c, s = math.cos(angle), math.sin(angle)
        delta = math.pi if c * s < 0 else 0.0
        alpha, beta = _renorm(abs(c), abs(s))
        return cls(alpha, beta, delta)

    def vector(self):
        return np.array([self.alpha, self.beta * cmath.exp(-1j * self.delta_phase)])


H = JonesPolarization(1.0, 0.0, 0.0)
V = JonesPolarization(0.0, 1.0, 0.0)


def _renorm(alpha, beta):
    n = math.hypot(alpha, beta)
    return alpha / n, beta / n


def _wrap(phi):
    """Wrap to [-pi, pi)."""
    return (phi + math.pi) % _TWO_PI - math.pi


@dataclass(frozen=True)
class PhotonState:
    """One wavepacket term of a photon.

    ``phase`` is kept canonical in [0, pi) by flipping the sign of the
    real ``coefficient`` so equal terms are detected for merging.
    """

    route: str
    coefficient: float = 1.0
    delay: float = 0.0
    phase: float = 0.0
    spectrum: SpectralMode = SpectralMode(2 * math.pi * 193.4e12, 2 * math.pi * 65e9)
    polarization: JonesPolarization = H

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise InvalidArgumentError("state coefficient must be finite")
        if not (0.0 <= self.phase < math.pi):
            coeff, phase = canonical_phase(self.coefficient, self.phase)
            object.__setattr__(self, "coefficient", coeff)
            object.__setattr__(self, "phase", phase)

    def key(self):
        return (self.route, self.delay, self.phase, self.spectrum, self.polarization)

    def scaled(self, factor):
        return replace(self, coefficient=self.coefficient * factor)


def canonical_phase(coefficient, phase):
    phase = phase % _TWO_PI
    if phase >= math.pi:
        phase -= math.pi
        coefficient = -coefficient
        if phase >= math.pi:  # rounding at the boundary
            phase = 0.0
    return coefficient, phase


@dataclass(frozen=True)
class Photon:
    states: tuple
    _hash: int = field(default=0, init=False, repr=False, compare=False)
    _routes: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.states, tuple):
            object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "_hash", hash(self.states))
        object.__setattr__(self, "_routes", frozenset(s.route for s in self.states))

    def __hash__(self):
        return self._hash

    def routes(self):
        return set(self._routes)

    def on_route(self, route):
        return route in self._routes


_pool_ids = itertools.count(1)


def next_pool_id():
    return next(_pool_ids)


@dataclass(frozen=True)
class PhotonPool:
    """A product of photons forming one correlated system.

    ``lineage`` records how the pool came to be (emissions, merges, RNG
    draws) for reproducibility audits; it never affects physics.
    """

    photons: tuple = ()
    pool_id: int = field(default_factory=next_pool_id)
    lineage: tuple = ()

    def __post_init__(self):
        if not isinstance(self.photons, tuple):
            object.__setattr__(self, "photons", tuple(self.photons))

    def __len__(self):
        return len(self.photons)

    def with_photons(self, photons, note=None):
        lineage = self.lineage + (note,) if note else self.lineage
        return PhotonPool(tuple(photons), self.pool_id, lineage)

    def routes(self):
        out = set()
        for p in self.photons:
            out |= p._routes
        return out

    def on_route(self, route):
        return any(route in p._routes for p in self.photons)


def merge_duplicate_states(states):
    """Sum coefficients of terms equal in every other field; drop negligible ones."""
    acc = {}
    for s in states:
        k = s.key()
        if k in acc:
            acc[k] = (acc[k][0], acc[k][1] + s.coefficient)
        else:
            acc[k] = (s, s.coefficient)
    out = []
    for s, c in acc.values():
        if abs(c) < COEFF_DROP:
            continue
        out.append(s if c == s.coefficient else replace(s, coefficient=c))
    return tuple(out)


# -- overlaps ---------------------------------------------------------------


def spectral_overlap(s1, tau1, s2, tau2):
    """Integral of phi1(w) phi2(w) exp(-i w (tau2 - tau1)) over all w.

    Closed form of the Gaussian integral, arranged so the large centre
    frequencies never enter a cancelling difference.
    """
    dt = tau2 - tau1
    if not math.isfinite(dt):
        raise InvalidArgumentError("delays must be finite")
    if s1 == s2:
        if dt == 0.0:
            return 1.0 + 0.0j
        return math.exp(-0.5 * (s1.sigma * dt) ** 2) * cmath.exp(-1j * s1.mu * dt)
    v1, v2 = s1.sigma**2, s2.sigma**2
    vs = v1 + v2
    mag = math.sqrt(2.0 * s1.sigma * s2.sigma / vs) * math.exp(
        -((s1.mu - s2.mu) ** 2) / (4.0 * vs) - dt * dt * v1 * v2 / vs
    )
    if dt == 0.0:
        return complex(mag)
    mean = (s1.mu * v2 + s2.mu * v1) / vs
    return mag * cmath.exp(-1j * mean * dt)


def polarization_overlap(p1, p2):
    """Inner product of the Jones vectors (alpha, beta e^{-i theta})."""
    if p1 == p2:
        return 1.0 + 0.0j
    out = p1.alpha * p2.alpha
    if p1.beta and p2.beta:
        out = out + p1.beta * p2.beta * cmath.exp(-1j * (p2.delta_phase - p1.delta_phase))
    return complex(out)


def state_overlap(a, b):
    """<a|b> for two single-photon terms, coefficients included."""
    if a.route != b.route:
        return 0j
    val = a.coefficient * b.coefficient
    if a.phase != b.phase:
        val = val * cmath.exp(1j * (b.phase - a.phase))
    val = val * spectral_overlap(a.spectrum, a.delay, b.spectrum, b.delay)
    if a.polarization is not b.polarization:
        val = val * polarization_overlap(a.polarization, b.polarization)
    return complex(val)


@lru_cache(maxsize=1 << 16)
def route_overlaps(p, q):
    """Per-route contributions to <p|q> as a dict route -> complex."""
    out = {}
    by_route = {}
    for s in q.states:
        by_route.setdefault(s.route, []).append(s)
    for a in p.states:
        others = by_route.get(a.route)
        if not others:
            continue
        acc = out.get(a.route, 0j)
        for b in others:
            acc += state_overlap(a, b)
        out[a.route] = acc
    return out


def photon_overlap(p, q, include_loss=True):
    d = route_overlaps(p, q)
    if include_loss:
        return sum(d.values(), 0j)
    return sum((v for r, v in d.items() if not is_loss_route(r)), 0j)


def gram(photons, include_loss=True):
    n = len(photons)
    g = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            v = photon_overlap(photons[i], photons[j], include_loss)
            g[i, j] = v
            g[j, i] = v.conjugate()
    return g


def split_gram(photons, routes):
    """Gram matrices (on ``routes``, everything else including loss)."""
    routes = frozenset(routes)
    n = len(photons)
    on = np.zeros((n, n), dtype=complex)
    off = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            a = b = 0j
            for r, v in route_overlaps(photons[i], photons[j]).items():
                if r in routes:
                    a += v
                else:
                    b += v
            on[i, j], off[i, j] = a, b
            on[j, i], off[j, i] = a.conjugate(), b.conjugate()
    return on, off


# -- permanents -------------------------------------------------------------


def permanent(matrix, cap=DEFAULT_PHOTON_CAP):
    """Exact permanent via Ryser's formula with Gray-code subset updates."""
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"permanent needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n > cap:
        raise CapacityError(f"{n}x{n} permanent exceeds the photon cap of {cap}", cap)
    if n == 0:
        return 1.0 + 0j
    rows = a.astype(complex).tolist()
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] + rows[0][1] * rows[1][0]
    if n == 3:
        (a0, a1, a2), (b0, b1, b2), (c0, c1, c2) = rows
        return (
            a0 * (b1 * c2 + b2 * c1) + a1 * (b0 * c2 + b2 * c0) + a2 * (b0 * c1 + b1 * c0)
        )
    cols = [[rows[i][j] for i in range(n)] for j in range(n)]
    sums = [0j] * n
    total = 0j
    sign = -1  # (-1)^{|S|}; subset sizes alternate parity along the Gray code
    subset = 0
    for k in range(1, 1 << n):
        j = (k & -k).bit_length() - 1  # bit flipped in Gray code order
        col = cols[j]
        if subset >> j & 1:
            sums = [s - c for s, c in zip(sums, col)]
        else:
            sums = [s + c for s, c in zip(sums, col)]
        subset ^= 1 << j
        prod = 1
        for s in sums:
            prod *= s
        total += sign * prod
        sign = -sign
    return total if n % 2 == 0 else -total


def permanent_naive(matrix):
    """Sum over permutations; exponential, for checking only."""
    a = np.asarray(matrix, dtype=complex)
    n = a.shape[0]
    total = 0j
    for perm in itertools.permutations(range(n)):
        prod = 1 + 0j
        for i, j in enumerate(perm):
            prod *= a[i, j]
        total += prod
    return total


def configuration_inner(left, right, cap=DEFAULT_PHOTON_CAP):
    """<0| prod b_i  prod a_j^dagger |0> for two lists of single-photon terms."""
    if len(left) != len(right):
        raise InvalidArgumentError(
            f"configurations differ in length: {len(left)} vs {len(right)}"
        )
    n = len(left)
    g = np.empty((n, n), dtype=complex)
    for i, a in enumerate(left):
        for j, b in enumerate(right):
            g[i, j] = state_overlap(a, b)
    return permanent(g, cap)


def _check_cap(pool, cap):
    if len(pool.photons) > cap:
        raise CapacityError(
            f"pool {pool.pool_id} holds {len(pool.photons)} photons, above the cap of {cap}",
            cap,
        )


def _real(value, what):
    if abs(value.imag) > 1e-9 * max(1.0, abs(value.real)):
        raise ArithmeticError(f"{what} has imaginary residue {value.imag:.3e}")
    return float(value.real)


def pool_norm(pool, cap=DEFAULT_PHOTON_CAP):
    """Norm of the pool's component with no photon on a loss route."""
    _check_cap(pool, cap)
    return _real(permanent(gram(pool.photons, include_loss=False), cap), "pool norm")


def total_norm(pool, cap=DEFAULT_PHOTON_CAP):
    """Norm of the whole pool, lost amplitude included."""
    _check_cap(pool, cap)
    return _real(permanent(gram(pool.photons), cap), "pool norm")


def configuration_norm(pool, include_loss=False):
    """Pool norm as the explicit sum over configuration pairs.

    Pairs whose per-route photon counts differ are skipped; their
    permanent vanishes by route orthogonality.
    """
    photons = [
        [s for s in p.states if include_loss or not is_loss_route(s.route)] for p in pool.photons
    ]
    configs = list(itertools.product(*photons))
    groups = {}
    for c in configs:
        sig = tuple(sorted(s.route for s in c))
        groups.setdefault(sig, []).append(c)
    total = 0j
    for group in groups.values():
        for a in group:
            for b in group:
                total += configuration_inner(a, b)
    return _real(total, "pool norm")


def scale_pool(pool, factor, note=None):
    photons = tuple(Photon(tuple(s.scaled(factor) for s in p.states)) for p in pool.photons)
    return pool.with_photons(photons, note)


def normalize_pool(pool, cap=DEFAULT_PHOTON_CAP):
    """Scale all coefficients uniformly so the pool has unit total norm."""
    if not pool.photons:
        return pool
    norm = total_norm(pool, cap)
    if not norm > 1e-300:
        raise DegenerateStateError(f"pool {pool.pool_id} has zero norm")
    if abs(norm - 1.0) <= 1e-15:
        return pool
    return scale_pool(pool, norm ** (-0.5 / len(pool.photons)))
