"""Single-photon detector model: efficiency, dark counts, afterpulses, jitter, gating."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateStateError, InvalidArgumentError
from .qcore import collapse, route_number_distribution, sample_count


@dataclass(frozen=True)
class SpdParams:
    detection_efficiency: float = 1.0
    dark_count_rate: float = 0.0  # probability per second
    afterpulse_prob: float = 0.0
    timing_jitter: float = 0.0
    resolves_photon_number: bool = False
    enabled: bool = True
    gate_width: float = 1e-9
    gated: bool = False
    gate_offset: float = 0.0
    gate_period: float = 1e-8

    def __post_init__(self):
        for name in ("detection_efficiency", "afterpulse_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {v}")
        if not self.gate_width >= 0:
            raise InvalidArgumentError("gate width must be >= 0")
        if not self.timing_jitter >= 0:
            raise InvalidArgumentError("timing jitter must be >= 0")
        if not self.dark_count_rate >= 0:
            raise InvalidArgumentError("dark count rate must be >= 0")
        if self.dark_count_rate * self.gate_width > 1.0:
            raise InvalidArgumentError("dark count probability per gate exceeds 1")
        if not self.gate_period > 0:
            raise InvalidArgumentError("gate period must be > 0")

    @property
    def dark_probability(self):
        """Dark-count probability within one gate."""
        return self.dark_count_rate * self.gate_width

    def in_gate(self, arrival):
        if not self.gated:
            return True
        phase = (arrival - self.gate_offset) % self.gate_period
        distance = min(phase, self.gate_period - phase)
        return distance <= self.gate_width / 2 + 1e-18


@dataclass(frozen=True)
class DetectionRecord:
    detector_id: str
    trial_index: int
    clicked: bool
    photon_count: int | None
    timestamp: float
    aborted: bool = False


def click_probability(n, params, afterpulse_prob=None):
    """1 - (1 - eta)^n (1 - p_d dt)(1 - p_a), clamped to [0, 1]."""
    if n < 0:
        raise InvalidArgumentError("photon number must be >= 0")
    p_a = params.afterpulse_prob if afterpulse_prob is None else afterpulse_prob
    miss = (1.0 - params.detection_efficiency) ** n * (1.0 - params.dark_probability) * (1.0 - p_a)
    return min(1.0, max(0.0, 1.0 - miss))


def measure_route(pool, route, rng):
    """Sample the photon number on ``route`` and collapse; two uniforms consumed.

    Returns (k, surviving pool).  Pools with nothing on the route are
    returned untouched with k = 0 and no draws.
    """
    if pool is None or not pool.on_route(route):
        return 0, pool
    k = sample_count(route_number_distribution(pool, route), rng)
    outcome = collapse(pool, route, k, rng)
    return k, outcome.surviving_pool


def click_record(detector_id, params, k, arrival, rng, trial_index=0, afterpulse_prob=None,
                 aborted=False):
    """Turn an arrived photon number into a record; one uniform and one normal consumed.

    Both draws happen whatever the outcome so stream positions never depend
    on physics.
    """
    u = rng.random()
    z = rng.standard_normal()
    timestamp = arrival + params.timing_jitter * z
    live = params.enabled and params.in_gate(arrival) and not aborted
    clicked = live and u < click_probability(k, params, afterpulse_prob)
    count = k if (params.resolves_photon_number and live) else None
    return DetectionRecord(detector_id, trial_index, bool(clicked), count, timestamp, aborted)


def detect(pool, detector_id, route, params, rng, arrival=0.0, trial_index=0,
           afterpulse_prob=None):
    """Measure ``route`` of ``pool`` and produce a detection record.

    Photons on the route are absorbed even when the detector is disabled or
    the arrival misses the gate; such records never click.  A degenerate
    post-selection yields an ``aborted`` record and the pool is returned
    unchanged.  Returns (record, surviving pool).
    """
    try:
        k, remaining = measure_route(pool, route, rng)
    except DegenerateStateError:
        record = click_record(detector_id, params, 0, arrival, rng, trial_index,
                              afterpulse_prob, aborted=True)
        return record, pool
    record = click_record(detector_id, params, k, arrival, rng, trial_index, afterpulse_prob)
    return record, remaining


def constant_afterpulse(prob, clicked):
    """Default afterpulse hook: the probability never changes."""
    return prob

