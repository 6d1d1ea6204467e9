"""Discrete-event trial engine, exact probability evaluation and sweeps.

Events are ordered by (timestamp, causal rank, sequence number).  The rank
comes from the topological order of routes under zero-delay transitions,
so a device holding two simultaneous inputs fires only after everything
upstream at that instant has fired.  Arrivals are buffered per node and
the node fires once per timestamp on all of them together.
"""

from __future__ import annotations

import heapq
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .components import apply_device
from .detector import DetectionRecord, click_probability, click_record, constant_afterpulse, measure_route
from .errors import CapacityError, DegenerateStateError, InvalidArgumentError
from .qcore import joint_number_distribution, merge_pools
from .sources import emit

Z95 = statistics.NormalDist().inv_cdf(0.975)

_ARRIVAL, _FIRE = 0, 1


class TrialStreams:
    """Per-trial Philox streams derived from (master_seed, point, trial).

    The key comes from ``SeedSequence(master_seed, spawn_key=(point,))``;
    each trial starts from counter ``[0, 0, trial, 0]``, so any trial of any
    point can be replayed without touching the others.
    """

    def __init__(self, master_seed, point=0):
        if master_seed < 0:
            raise InvalidArgumentError("seed must be >= 0")
        ss = np.random.SeedSequence(master_seed, spawn_key=(point,))
        self._bitgen = np.random.Philox(key=ss.generate_state(2, np.uint64))
        self._gen = np.random.Generator(self._bitgen)
        self._base = self._bitgen.state

    def for_trial(self, trial):
        state = dict(self._base)
        state["state"] = {
            "counter": np.array([0, 0, trial, 0], dtype=np.uint64),
            "key": self._base["state"]["key"],
        }
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._bitgen.state = state
        return self._gen


@dataclass
class TrialResult:
    records: list
    leftover: list  # (pool_id, routes) for pools still holding photons at the end
    emitted: dict  # source -> photon number
    exceedances: int = 0
    aborted: bool = False
    events: int = 0


class _Trial:
    def __init__(self, topology, rng, trial_index, max_events, afterpulse_hooks):
        self.top = topology
        self.rng = rng
        self.trial_index = trial_index
        self.max_events = max_events
        self.hooks = afterpulse_hooks or {}
        self.fire_rank = topology.fire_rank
        self.consumer = topology.consumer
        self.arrival_rank = {r: 2 * k for r, k in topology.route_rank.items()}
        self.queue = []
        self.seq = 0
        self.pools = {}
        self.alias = {}
        self.pending = {}  # node -> (time, ordered {(pool_id, route): None})
        self.scheduled = set()
        self.records = []
        self.fired_detectors = set()
        self.afterpulse = {n: p.afterpulse_prob for n, (p, _) in topology.detectors.items()}
        self.aborted = False
        self.events = 0
        self.realized = {}

    def _push(self, time, rank, kind, payload):
        heapq.heappush(self.queue, (time, rank, self.seq, kind, payload))
        self.seq += 1

    def _resolve(self, pool_id):
        while pool_id in self.alias:
            pool_id = self.alias[pool_id]
        return pool_id

    def _schedule(self, pool_id, route, time):
        if route not in self.consumer:
            return
        key = (pool_id, route, time)
        if key in self.scheduled:
            return
        self.scheduled.add(key)
        heapq.heappush(self.queue, (time, self.arrival_rank[route], self.seq, _ARRIVAL, (pool_id, route)))
        self.seq += 1

    def _store(self, pool):
        if pool.photons:
            self.pools[pool.pool_id] = pool
        else:
            self.pools.pop(pool.pool_id, None)

    def emit_sources(self, counter):
        emitted = {}
        for name in sorted(self.top.sources):
            params, t0 = self.top.sources[name]
            pool = emit(params, self.rng, counter)
            emitted[name] = len(pool)
            if pool.photons:
                self.pools[pool.pool_id] = pool
                self._schedule(pool.pool_id, params.emit_route, t0 + self.top.link_delay(params.emit_route))
        return emitted

    def _arrival(self, time, pool_id, route):
        node = self.consumer[route][1]
        slot = self.pending.get(node)
        if slot is None or slot[0] != time:
            if slot is not None:
                # an older batch for this node is still unfired; fire it first
                self._fire(node)
            slot = (time, {})
            self.pending[node] = slot
            slot[1][(pool_id, route)] = None
            rank = self.fire_rank[node]
            if self.queue and self.queue[0][:2] <= (time, rank):
                self._push(time, rank, _FIRE, node)
            else:
                # nothing else can reach this node first: fire now
                self._fire(node)
            return
        slot[1][(pool_id, route)] = None

    def _gather(self, node):
        time, arrived = self.pending.pop(node)
        if len(arrived) == 1:
            ((pool_id, route),) = arrived
            pid = self._resolve(pool_id)
            return time, ([pid] if pid in self.pools else []), (route,)
        ids, routes = [], set()
        for pool_id, route in arrived:
            pid = self._resolve(pool_id)
            if pid in self.pools and pid not in ids:
                ids.append(pid)
            routes.add(route)
        return time, ids, routes

    def _merge(self, ids):
        if len(ids) == 1:
            return self.pools[ids[0]]
        pool = self.pools.pop(ids[0])
        for pid in ids[1:]:
            other = self.pools.pop(pid)
            merged = merge_pools(pool, other)
            for old in (pool.pool_id, other.pool_id):
                if old != merged.pool_id:
                    self.alias[old] = merged.pool_id
            pool = merged
        self.pools[pool.pool_id] = pool
        return pool

    def _fire(self, node):
        if node not in self.pending:
            return
        if node in self.top.devices:
            self._fire_device(node)
        else:
            self._fire_detector(node)

    def _fire_device(self, name):
        time, ids, routes = self._gather(name)
        if not ids:
            return
        dev = self.top.devices[name]
        if dev.stochastic:
            # one disturbance draw per device per trial, shared by every pass
            if name not in self.realized:
                self.realized[name] = dev.realize(self.rng)
            dev = self.realized[name]
        pool = self._merge(ids)
        pool = apply_device(pool, dev, self.rng, routes)
        self._store(pool)
        if not pool.photons:
            return
        for route, delay in self.top.output_delays[name]:
            if pool.on_route(route):
                self._schedule(pool.pool_id, route, time + delay)

    def _fire_detector(self, name):
        time, ids, _ = self._gather(name)
        params, route = self.top.detectors[name]
        total = 0
        aborted = False
        for pid in ids:
            pool = self.pools[pid]
            try:
                k, remaining = measure_route(pool, route, self.rng)
            except DegenerateStateError:
                aborted = True
                continue
            total += k
            self._store(remaining)
        self._record(name, params, total, time, aborted)

    def _record(self, name, params, k, time, aborted=False):
        record = click_record(
            name, params, k, time, self.rng, self.trial_index, self.afterpulse[name], aborted
        )
        hook = self.hooks.get(name, constant_afterpulse)
        self.afterpulse[name] = hook(self.afterpulse[name], record.clicked)
        self.records.append(record)
        self.fired_detectors.add(name)
        self.aborted = self.aborted or aborted

    def run(self):
        while self.queue:
            self.events += 1
            if self.events > self.max_events:
                raise CapacityError(
                    f"trial {self.trial_index}: more than {self.max_events} events", self.max_events
                )
            time, _, _, kind, payload = heapq.heappop(self.queue)
            if kind == _ARRIVAL:
                self.scheduled.discard((payload[0], payload[1], time))
                self._arrival(time, *payload)
            else:
                self._fire(payload)
        # detectors never reached still see a gate: dark counts and afterpulses
        for name in sorted(self.top.detectors):
            if name not in self.fired_detectors:
                params, _ = self.top.detectors[name]
                self._record(name, params, 0, params.gate_offset)
        return [(pid, tuple(sorted(p.routes()))) for pid, p in sorted(self.pools.items())]


def simulate_trial(topology, rng, trial_index=0, afterpulse_hooks=None, max_events=None):
    """Run one trial with the given generator; returns a :class:`TrialResult`."""
    if max_events is None:
        max_events = topology.experiment.max_events if topology.experiment else 100_000
    trial = _Trial(topology, rng, trial_index, max_events, afterpulse_hooks)
    counter = {"exceedances": 0}
    emitted = trial.emit_sources(counter)
    leftover = trial.run()
    return TrialResult(trial.records, leftover, emitted, counter["exceedances"], trial.aborted, trial.events)


def run_trial(topology, seed, trial_index, point=0):
    """Detection records of one trial, reproducible from (seed, point, trial_index)."""
    rng = TrialStreams(seed, point).for_trial(trial_index)
    return simulate_trial(topology, rng, trial_index).records


# -- exact evaluation ---------------------------------------------------------


def propagate(topology, max_steps=10_000):
    """Push every source photon through the devices without measuring.

    Only single-photon sources and deterministic devices are allowed.
    Devices are applied in causal-rank order until no photon sits on a
    device input.  Returns the final pool.
    """
    from .sources import emit_single_photon

    pool = None
    for name in sorted(topology.sources):
        params, _ = topology.sources[name]
        if params.kind != "single_photon":
            raise InvalidArgumentError(f"exact mode needs single-photon sources; {name!r} is {params.kind}")
        p = emit_single_photon(params)
        pool = p if pool is None else merge_pools(pool, p)
    for dev in topology.devices.values():
        if dev.stochastic:
            raise InvalidArgumentError(f"exact mode needs deterministic devices; {dev.name!r} is random")
    order = sorted(topology.devices, key=lambda n: (topology.fire_rank[n], n))
    for _ in range(max_steps):
        present = pool.routes()
        for name in order:
            dev = topology.devices[name]
            routes = {r for _, r in dev.inputs if r in present}
            if routes:
                pool = apply_device(pool, dev, None, routes)
                break
        else:
            return pool
    raise CapacityError(f"propagation did not settle within {max_steps} steps", max_steps)


def analytic_probabilities(topology, coincidences=()):
    """Exact click and coincidence probabilities for one emission.

    Photon-number statistics come from the joint distribution over all
    detector routes; each detector then clicks independently with its
    efficiency / dark / afterpulse formula.  Gating is not modelled here.
    """
    names = sorted(topology.detectors)
    pool = propagate(topology)
    routes = [topology.detectors[n][1] for n in names]
    joint = joint_number_distribution(pool, routes)
    n = joint.shape[0]
    click = {}
    for name in names:
        params, _ = topology.detectors[name]
        live = params.enabled
        click[name] = np.array([click_probability(k, params) if live else 0.0 for k in range(n)])
    out = {}
    for i, name in enumerate(names):
        marginal = joint.sum(axis=tuple(j for j in range(len(names)) if j != i))
        out[f"p_{name}"] = float(marginal @ click[name])
    for a, b in coincidences:
        ia, ib = names.index(a), names.index(b)
        pair = joint.sum(axis=tuple(j for j in range(len(names)) if j not in (ia, ib)))
        if ia > ib:
            pair = pair.T
        out[f"c_{a}_{b}"] = float(click[a] @ pair @ click[b])
    return out


# -- sweeps -------------------------------------------------------------------


def wilson_interval(k, n, z=Z95):
    """Wilson score interval for k successes out of n."""
    if n == 0:
        return math.nan, math.nan
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def stats_columns(topology, coincidences):
    cols = ["point", "value", "trials", "aborted", "exceedances", "multiphoton_pulses"]
    for name in sorted(topology.detectors):
        cols += [f"p_{name}", f"p_{name}_lo", f"p_{name}_hi"]
    for a, b in coincidences:
        cols += [f"c_{a}_{b}", f"c_{a}_{b}_lo", f"c_{a}_{b}_hi"]
    return cols


@dataclass
class PointResult:
    row: dict
    records: list = field(default_factory=list)


def run_point(topology, point, value, n_trials, master_seed, coincidences, analytic=False,
              keep_records=False):
    """Statistics (and optionally records) for one sweep point."""
    names = sorted(topology.detectors)
    row = {"point": point, "value": value, "trials": n_trials, "aborted": 0, "exceedances": 0,
           "multiphoton_pulses": 0}
    if analytic:
        probs = analytic_probabilities(topology, coincidences)
        for key, p in probs.items():
            row[key], row[key + "_lo"], row[key + "_hi"] = p, p, p
        return PointResult(row)
    streams = TrialStreams(master_seed, point)
    clicks = dict.fromkeys(names, 0)
    coinc = dict.fromkeys(coincidences, 0)
    records = []
    for t in range(n_trials):
        result = simulate_trial(topology, streams.for_trial(t), point * n_trials + t)
        fired = {r.detector_id for r in result.records if r.clicked}
        for name in fired:
            clicks[name] += 1
        for a, b in coincidences:
            if a in fired and b in fired:
                coinc[(a, b)] += 1
        row["aborted"] += result.aborted
        row["exceedances"] += result.exceedances
        row["multiphoton_pulses"] += sum(1 for n in result.emitted.values() if n >= 2)
        if keep_records:
            records.extend(result.records)
    for name in names:
        key = f"p_{name}"
        row[key] = clicks[name] / n_trials
        row[key + "_lo"], row[key + "_hi"] = wilson_interval(clicks[name], n_trials)
    for (a, b), k in coinc.items():
        key = f"c_{a}_{b}"
        row[key] = k / n_trials
        row[key + "_lo"], row[key + "_hi"] = wilson_interval(k, n_trials)
    return PointResult(row, records)


def _point_job(args):
    return run_point(*args)


@dataclass
class ExperimentResult:
    columns: list
    rows: list
    records: list


def run_experiment(topology, sweep, n_trials, master_seed, jobs=1, analytic=False,
                   keep_records=False, coincidences=None):
    """Run ``n_trials`` per sweep point; results do not depend on ``jobs``.

    ``sweep`` is a :class:`~fockqkd.topology.Sweep` or None (single point).
    """
    if n_trials < 0:
        raise InvalidArgumentError("n_trials must be >= 0")
    if coincidences is None:
        coincidences = topology.experiment.coincidences if topology.experiment else ()
    coincidences = tuple(tuple(c) for c in coincidences)
    columns = stats_columns(topology, coincidences)
    if n_trials == 0 and not analytic:
        return ExperimentResult(columns, [], [])
    if sweep is None:
        points = [(topology, None)]
    else:
        points = [(topology.with_parameter(sweep.parameter, v), v) for v in sweep.values]
    args = [
        (top, i, value, n_trials, master_seed, coincidences, analytic, keep_records)
        for i, (top, value) in enumerate(points)
    ]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_point_job, args))
    else:
        results = [_point_job(a) for a in args]
    records = [r for res in results for r in res.records]
    return ExperimentResult(columns, [res.row for res in results], records)


__all__ = [
    "DetectionRecord",
    "ExperimentResult",
    "TrialResult",
    "TrialStreams",
    "analytic_probabilities",
    "propagate",
    "run_experiment",
    "run_point",
    "run_trial",
    "simulate_trial",
    "wilson_interval",
]
