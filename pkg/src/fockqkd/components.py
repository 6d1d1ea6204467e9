"""Optical device library.

Every device maps one incoming wavepacket term on one of its ports to a
list of outgoing terms.  Amplitude removed by insertion loss leaves on a
device-private loss route, so a lossy device acts as an isometry onto
system + loss modes and multi-photon statistics stay exact.

Devices are frozen dataclasses holding their parameters and their
port-to-route wiring; the pool-level entry point is :func:`apply_device`.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError, TopologyError
from .fock import (
    H,
    V,
    JonesPolarization,
    Photon,
    merge_duplicate_states,
)
from .units import db_to_transmission

DEFAULT_FIBER_DELAY_PER_KM = 4.9e-6


@dataclass(frozen=True, kw_only=True)
class Device:
    name: str
    # (port, route) pairs; a route consumed at an input port, produced at an output port
    inputs: tuple = ()
    outputs: tuple = ()

    kind = "device"
    in_ports = ()
    out_ports = ()
    latency = 0.0
    stochastic = False

    def __post_init__(self):
        for port, _ in self.inputs:
            if port not in self.in_ports:
                raise TopologyError(f"{self.kind} {self.name!r} has no input port {port!r}")
        for port, _ in self.outputs:
            if port not in self.out_ports:
                raise TopologyError(f"{self.kind} {self.name!r} has no output port {port!r}")

    def route_ports(self):
        """Map consumed route -> arrival port."""
        return {route: port for port, route in self.inputs}

    def out_route(self, port):
        if port.startswith("loss:"):
            return f"loss:{self.name}:{port[5:]}"
        for p, route in self.outputs:
            if p == port:
                return route
        return f"{self.name}.{port}"

    def transfer(self, state, port):
        raise NotImplementedError

    def wired(self, inputs, outputs):
        return replace(self, inputs=tuple(inputs), outputs=tuple(outputs))


def _check_loss(*values):
    for v in values:
        if not (v >= 0 and math.isfinite(v)):
            raise InvalidArgumentError(f"loss must be a finite value >= 0 dB, got {v}")


def _lossy(state, port, out_port, transmission):
    """Pass ``state`` to ``out_port`` with power ``transmission``; the rest to loss."""
    if transmission >= 1.0:
        return [(out_port, state)]
    out = [(out_port, state.scaled(math.sqrt(transmission)))]
    out.append((f"loss:{port}", state.scaled(math.sqrt(1.0 - transmission))))
    return out


class _TwoPort:
    """Bidirectional in <-> out element."""

    in_ports = ("in", "out")
    out_ports = ("in", "out")

    @staticmethod
    def exit_port(port):
        return "out" if port == "in" else "in"


# -- path-splitting devices ------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class BsParams(Device):
    """Beamsplitter; inputs a, b and outputs c, d."""

    splitting_ratio_t: float = 0.5
    splitting_ratio_r: float = 0.5
    loss_db: float = 0.0

    kind = "beamsplitter"
    in_ports = ("a", "b")
    out_ports = ("c", "d")

    def __post_init__(self):
        super().__post_init__()
        t, r = self.splitting_ratio_t, self.splitting_ratio_r
        if not (0 <= t <= 1 and 0 <= r <= 1) or abs(t + r - 1) > 1e-9:
            raise InvalidArgumentError(f"need T, R in [0, 1] with T + R = 1, got {t}, {r}")
        _check_loss(self.loss_db)

    def transfer(self, state, port):
        eta = db_to_transmission(self.loss_db)
        st = math.sqrt(eta * self.splitting_ratio_t)
        sr = math.sqrt(eta * self.splitting_ratio_r)
        if port == "a":
            out = [("c", state.scaled(st)), ("d", state.scaled(-sr))]
        else:
            out = [("c", state.scaled(sr)), ("d", state.scaled(st))]
        if eta < 1.0:
            out.append((f"loss:{port}", state.scaled(math.sqrt(1.0 - eta))))
        return out


def _split_polarization(state):
    """(H part, V part) of a term; the V part carries exp(-i delta) in its phase."""
    pol = state.polarization
    parts = []
    if pol.alpha > 0:
        parts.append(("H", replace(state, coefficient=state.coefficient * pol.alpha, polarization=H)))
    if pol.beta > 0:
        parts.append(
            (
                "V",
                replace(
                    state,
                    coefficient=state.coefficient * pol.beta,
                    phase=state.phase - pol.delta_phase,
                    polarization=V,
                ),
            )
        )
    return parts


@dataclass(frozen=True, kw_only=True)
class PbsParams(Device):
    """Polarizing beamsplitter with polarization-dependent loss and finite extinction.

    Wrong-port leakage amplitude is sqrt(1/(R_E+1)); leakage from input b
    carries a minus sign so the zero-loss map is unitary.
    """

    loss_h_db: float = 0.0
    loss_v_db: float = 0.0
    extinction_ratio: float = math.inf

    kind = "pbs"
    in_ports = ("a", "b")
    out_ports = ("c", "d")

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.loss_h_db, self.loss_v_db)
        if not self.extinction_ratio > 0:
            raise InvalidArgumentError("extinction ratio must be > 0")

    def _amplitudes(self, loss_db):
        eta = db_to_transmission(loss_db)
        re = self.extinction_ratio
        if math.isinf(re):
            return eta, math.sqrt(eta), 0.0
        return eta, math.sqrt(eta * re / (re + 1.0)), math.sqrt(eta / (re + 1.0))

    def transfer(self, state, port):
        out = []
        for pol, part in _split_polarization(state):
            eta, main, leak = self._amplitudes(self.loss_h_db if pol == "H" else self.loss_v_db)
            # H from a and V from b exit c; the others exit d
            main_port = "c" if (pol == "H") == (port == "a") else "d"
            leak_port = "d" if main_port == "c" else "c"
            sign = 1.0 if port == "a" else -1.0
            out.append((main_port, part.scaled(main)))
            if leak:
                out.append((leak_port, part.scaled(sign * leak)))
            if eta < 1.0:
                out.append((f"loss:{port}", part.scaled(math.sqrt(1.0 - eta))))
        return out


# -- single-path devices ---------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class Attenuator(_TwoPort, Device):
    loss_db: float = 0.0

    kind = "attenuator"

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.loss_db)

    def transfer(self, state, port):
        return _lossy(state, port, self.exit_port(port), db_to_transmission(self.loss_db))


@dataclass(frozen=True, kw_only=True)
class BandpassFilter(_TwoPort, Device):
    """Piecewise loss profile evaluated at a term's centre frequency."""

    band_low: float = 0.0
    band_high: float = math.inf
    in_band_loss_db: float = 0.0
    out_band_loss_db: float = 30.0

    kind = "filter"

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.in_band_loss_db, self.out_band_loss_db)
        if self.band_low > self.band_high:
            raise InvalidArgumentError("filter band edges are reversed")

    def loss_at(self, omega):
        if self.band_low <= omega <= self.band_high:
            return self.in_band_loss_db
        return self.out_band_loss_db

    def transfer(self, state, port):
        eta = db_to_transmission(self.loss_at(state.spectrum.mu))
        return _lossy(state, port, self.exit_port(port), eta)


@dataclass(frozen=True, kw_only=True)
class Circulator(Device):
    """Three-port circulator, 1 -> 2 -> 3 -> 1."""

    loss_db: float = 0.0
    cycle: tuple = ("1", "2", "3")

    kind = "circulator"
    in_ports = ("1", "2", "3")
    out_ports = ("1", "2", "3")

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.loss_db)
        if sorted(self.cycle) != ["1", "2", "3"]:
            raise InvalidArgumentError("circulator cycle must be a permutation of ports 1, 2, 3")

    def transfer(self, state, port):
        i = self.cycle.index(port)
        nxt = self.cycle[(i + 1) % len(self.cycle)]
        return _lossy(state, port, nxt, db_to_transmission(self.loss_db))


@dataclass(frozen=True, kw_only=True)
class PolarizationModulator(_TwoPort, Device):
    """Sets each term's polarization to the target values."""

    alpha: float = 1.0
    beta: float = 0.0
    delta_phase: float = 0.0
    loss_db: float = 0.0

    kind = "polarization_modulator"

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.loss_db)
        JonesPolarization(self.alpha, self.beta, self.delta_phase)

    def transfer(self, state, port):
        pol = JonesPolarization(self.alpha, self.beta, self.delta_phase)
        return _lossy(replace(state, polarization=pol), port, self.exit_port(port),
                      db_to_transmission(self.loss_db))


@dataclass(frozen=True, kw_only=True)
class PhaseModulator(_TwoPort, Device):
    """Sets each term's phase to the target value."""

    phase: float = 0.0
    loss_db: float = 0.0

    kind = "phase_modulator"

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.loss_db)

    def transfer(self, state, port):
        out = replace(state, phase=self.phase)
        return _lossy(out, port, self.exit_port(port), db_to_transmission(self.loss_db))


@dataclass(frozen=True, kw_only=True)
class Isolator(_TwoPort, Device):
    """Forward (in -> out) sees the insertion loss, reverse adds the isolation."""

    loss_db: float = 0.0
    isolation_db: float = 40.0

    kind = "isolator"

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.loss_db, self.isolation_db)

    def transfer(self, state, port):
        loss = self.loss_db if port == "in" else self.loss_db + self.isolation_db
        return _lossy(state, port, self.exit_port(port), db_to_transmission(loss))


@dataclass(frozen=True, kw_only=True)
class OpticalSwitch(Device):
    """1x2 switch; the unselected port receives the isolation-suppressed crosstalk."""

    loss_db: float = 0.0
    isolation_db: float = 40.0
    selected: str = "out1"

    kind = "switch"
    in_ports = ("in",)
    out_ports = ("out1", "out2")

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.loss_db, self.isolation_db)
        if self.selected not in self.out_ports:
            raise InvalidArgumentError(f"switch selection must be out1 or out2, got {self.selected!r}")

    def transfer(self, state, port):
        eta = db_to_transmission(self.loss_db)
        leak = db_to_transmission(self.isolation_db)
        other = "out2" if self.selected == "out1" else "out1"
        out = [
            (self.selected, state.scaled(math.sqrt(eta * (1.0 - leak)))),
            (other, state.scaled(math.sqrt(eta * leak))),
        ]
        if eta < 1.0:
            out.append((f"loss:{port}", state.scaled(math.sqrt(1.0 - eta))))
        return out


def stokes(pol):
    """Stokes vector (1, S1, S2, S3) of a Jones polarization."""
    a, b, d = pol.alpha, pol.beta, pol.delta_phase
    return np.array([1.0, a * a - b * b, 2 * a * b * math.cos(d), 2 * a * b * math.sin(d)])


def polarization_from_stokes(s):
    s1 = min(1.0, max(-1.0, float(s[1])))
    alpha = math.sqrt((1.0 + s1) / 2.0)
    beta = math.sqrt((1.0 - s1) / 2.0)
    if alpha * beta < 1e-15:
        delta = 0.0
    else:
        delta = math.atan2(float(s[3]), float(s[2]))
    n = math.hypot(alpha, beta)
    return JonesPolarization(alpha / n, beta / n, delta)


def waveplate_mueller(offset_angle, relative_phase):
    c, s = math.cos(2 * offset_angle), math.sin(2 * offset_angle)
    cd, sd = math.cos(relative_phase), math.sin(relative_phase)
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c * c + cd * s * s, c * s - c * cd * s, s * sd],
            [0.0, c * s - c * cd * s, cd * c * c + s * s, -c * sd],
            [0.0, -s * sd, c * sd, cd],
        ]
    )


def waveplate_jones(offset_angle, relative_phase):
    """Jones matrix whose action on Stokes vectors equals :func:`waveplate_mueller`."""
    c, s = math.cos(offset_angle), math.sin(offset_angle)
    rot = np.array([[c, s], [-s, c]])
    return rot.T @ np.diag([1.0, cmath.exp(1j * relative_phase)]) @ rot


@dataclass(frozen=True, kw_only=True)
class Waveplate(_TwoPort, Device):
    relative_phase: float = math.pi
    offset_angle: float = 0.0
    loss_db: float = 0.0

    kind = "waveplate"

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.loss_db)
        if not 0 <= self.relative_phase < 2 * math.pi:
            raise InvalidArgumentError("waveplate relative phase must lie in [0, 2pi)")

    def transfer(self, state, port):
        s_out = stokes(state.polarization) @ waveplate_mueller(self.offset_angle, self.relative_phase)
        pol = polarization_from_stokes(s_out)
        # the Stokes route drops the global phase; recover it from the Jones form
        out_vec = waveplate_jones(self.offset_angle, self.relative_phase) @ state.polarization.vector()
        extra = cmath.phase(np.vdot(pol.vector(), out_vec))
        out = replace(state, polarization=pol, phase=state.phase + extra)
        return _lossy(out, port, self.exit_port(port), db_to_transmission(self.loss_db))


def faraday_matrix(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c * c - s * s, -2 * s * c], [-2 * s * c, s * s - c * c]])


@dataclass(frozen=True, kw_only=True)
class FaradayMirror(Device):
    loss_db: float = 0.0
    theta: float = math.pi / 4

    kind = "faraday_mirror"
    in_ports = ("in",)
    out_ports = ("out",)

    def __post_init__(self):
        super().__post_init__()
        _check_loss(self.loss_db)

    def transfer(self, state, port):
        h, v = faraday_matrix(self.theta) @ state.polarization.vector()
        pol, extra = JonesPolarization.from_vector(complex(h), complex(v))
        out = replace(state, polarization=pol, phase=state.phase + extra)
        return _lossy(out, port, "out", db_to_transmission(self.loss_db))


FIBER_PARAMETERS = ("phase", "alpha", "beta", "delta_phase")


@dataclass(frozen=True, kw_only=True)
class Fiber(_TwoPort, Device):
    """Lossy fiber with a Gaussian random-walk disturbance per pulse.

    ``disturbance`` holds (parameter, mean, sigma) triples for parameters in
    ``FIBER_PARAMETERS``.  :meth:`realize` draws once per disturbed
    parameter and every term passing the realized fiber sees the same
    offsets; the engine realizes each fiber once per trial so a round trip
    through a Faraday mirror meets the same birefringence both ways.
    """

    alpha_db_per_km: float = 0.2
    length_km: float = 0.0
    delay_per_km: float = DEFAULT_FIBER_DELAY_PER_KM
    disturbance: tuple = ()
    offsets: tuple = field(default=(), compare=True)

    kind = "fiber"

    def __post_init__(self):
        super().__post_init__()
        if not self.length_km >= 0:
            raise InvalidArgumentError("fiber length must be >= 0")
        _check_loss(self.alpha_db_per_km)
        for name, _mu, sigma in self.disturbance:
            if name not in FIBER_PARAMETERS:
                raise InvalidArgumentError(f"fiber cannot disturb {name!r}")
            if not sigma >= 0:
                raise InvalidArgumentError(f"disturbance sigma for {name} must be >= 0, got {sigma}")

    @property
    def latency(self):
        return self.length_km * self.delay_per_km

    @property
    def stochastic(self):
        return any(sigma > 0 for _, _, sigma in self.disturbance)

    def realize(self, rng):
        """Fix this pulse's disturbance offsets (one normal draw per random parameter)."""
        offsets = []
        for name, mu, sigma in self.disturbance:
            delta = mu + sigma * rng.standard_normal() if sigma > 0 else mu
            offsets.append((name, delta))
        return replace(self, offsets=tuple(offsets))

    def transfer(self, state, port):
        if self.disturbance and not self.offsets:
            offsets = tuple((n, mu) for n, mu, sigma in self.disturbance if sigma == 0)
        else:
            offsets = self.offsets
        d = dict(offsets)
        pol = state.polarization
        if any(k in d for k in ("alpha", "beta", "delta_phase")):
            a = max(0.0, pol.alpha + d.get("alpha", 0.0))
            b = max(0.0, pol.beta + d.get("beta", 0.0))
            n = math.hypot(a, b)
            if n == 0:
                a, n = 1.0, 1.0
            pol = JonesPolarization(a / n, b / n, pol.delta_phase + d.get("delta_phase", 0.0))
        out = replace(
            state,
            phase=state.phase + d.get("phase", 0.0),
            polarization=pol,
            delay=state.delay + self.length_km * self.delay_per_km,
        )
        eta = db_to_transmission(self.alpha_db_per_km * self.length_km)
        return _lossy(out, port, self.exit_port(port), eta)


DEVICE_KINDS = {
    cls.kind: cls
    for cls in (
        BsParams,
        PbsParams,
        Attenuator,
        BandpassFilter,
        Circulator,
        PolarizationModulator,
        PhaseModulator,
        Isolator,
        OpticalSwitch,
        Waveplate,
        FaradayMirror,
        Fiber,
    )
}


# -- pool-level application --------------------------------------------------


def _transform_photon(photon, device, route_ports):
    new_states = []
    changed = False
    for s in photon.states:
        port = route_ports.get(s.route)
        if port is None:
            new_states.append(s)
            continue
        changed = True
        for out_port, out in device.transfer(s, port):
            new_states.append(replace(out, route=device.out_route(out_port)))
    if not changed:
        return photon
    return Photon(merge_duplicate_states(new_states))


@lru_cache(maxsize=1 << 15)
def _cached_transform(photon, device, routes):
    return _transform_photon(photon, device, dict(routes))


@lru_cache(maxsize=4096)
def _ports_key(device, routes):
    ports = device.route_ports()
    if routes is not None:
        ports = {r: p for r, p in ports.items() if r in routes}
    return tuple(sorted(ports.items()))


def apply_device(pool, device, rng=None, routes=None):
    """Apply ``device`` to every term of ``pool`` sitting on one of its input routes.

    ``routes`` restricts the consumed routes (default: all wired inputs).
    Stochastic devices draw their disturbance from ``rng`` first unless
    ``device`` was already realized.
    """
    key = _ports_key(device, None if routes is None else frozenset(routes))
    if device.stochastic:
        # a device already realized (offsets fixed) is applied as is
        if not getattr(device, "offsets", ()):
            if rng is None:
                raise InvalidArgumentError(f"{device.kind} {device.name!r} needs an rng")
            device = device.realize(rng)
        ports = dict(key)
        photons = [_transform_photon(p, device, ports) for p in pool.photons]
    else:
        photons = [_cached_transform(p, device, key) for p in pool.photons]
    return pool.with_photons(photons)


def apply_bs(pool, params):
    return apply_device(pool, params)


def apply_pbs(pool, params):
    return apply_device(pool, params)


def apply_simple_device(pool, device):
    return apply_device(pool, device)


def apply_waveplate(pool, device):
    return apply_device(pool, device)


def apply_fiber(pool, device, rng=None):
    return apply_device(pool, device, rng)


def apply_faraday_mirror(pool, device):
    return apply_device(pool, device)
