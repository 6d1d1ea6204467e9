"""Netlist model: node parameter specs, links (routes) and validation.

A route is a directed link from one node's output port to another node's
input port.  Node parameters are stored in internal units and compiled
into device / source / detector objects; sweeps rebuild a topology with
one parameter replaced.
"""

from __future__ import annotations

import copy
import graphlib
import math
from dataclasses import dataclass, field

from . import components
from .detector import SpdParams
from .errors import ConfigError, FockError
from .fock import JonesPolarization, SpectralMode
from .sources import SourceParams

# config key -> (value kind, target field); value kind is a units kind or str/bool/int/list/table
SOURCE_SCHEMA = {
    "kind": ("str", "kind"),
    "mean_photon_number": ("dimensionless", "mean_photon_number"),
    "center_frequency": ("angular_frequency", None),
    "spectral_sigma": ("angular_frequency", None),
    "polarization_angle": ("angle", None),
    "alpha": ("dimensionless", None),
    "beta": ("dimensionless", None),
    "delta_phase": ("angle", None),
    "phase": ("angle", "phase"),
    "delay": ("time", "delay"),
    "emit_time": ("time", None),
    "repetition_period": ("time", "repetition_period"),
    "phase_randomized": ("bool", "phase_randomized"),
    "session_pulses": ("int", "session_pulses"),
    "truncation_epsilon": ("dimensionless", "truncation_epsilon"),
    "truncation": ("int", "truncation"),
}

DETECTOR_SCHEMA = {
    "efficiency": ("dimensionless", "detection_efficiency"),
    "dark_count_rate": ("rate", "dark_count_rate"),
    "afterpulse_prob": ("dimensionless", "afterpulse_prob"),
    "timing_jitter": ("time", "timing_jitter"),
    "resolves_photon_number": ("bool", "resolves_photon_number"),
    "enabled": ("bool", "enabled"),
    "gate_width": ("time", "gate_width"),
    "gated": ("bool", "gated"),
    "gate_offset": ("time", "gate_offset"),
    "gate_period": ("time", "gate_period"),
}

_LOSS = ("loss", "loss_db")

DEVICE_SCHEMAS = {
    "beamsplitter": {
        "splitting_ratio_t": ("dimensionless", "splitting_ratio_t"),
        "splitting_ratio_r": ("dimensionless", "splitting_ratio_r"),
        "loss": _LOSS,
    },
    "pbs": {
        "loss_h": ("loss", "loss_h_db"),
        "loss_v": ("loss", "loss_v_db"),
        "extinction_ratio": ("dimensionless", "extinction_ratio"),
    },
    "attenuator": {"loss": _LOSS},
    "filter": {
        "band_low": ("angular_frequency", "band_low"),
        "band_high": ("angular_frequency", "band_high"),
        "in_band_loss": ("loss", "in_band_loss_db"),
        "out_band_loss": ("loss", "out_band_loss_db"),
    },
    "circulator": {"loss": _LOSS, "cycle": ("list", "cycle")},
    "polarization_modulator": {
        "alpha": ("dimensionless", "alpha"),
        "beta": ("dimensionless", "beta"),
        "delta_phase": ("angle", "delta_phase"),
        "polarization_angle": ("angle", None),
        "loss": _LOSS,
    },
    "phase_modulator": {"phase": ("angle", "phase"), "loss": _LOSS},
    "isolator": {"loss": _LOSS, "isolation": ("loss", "isolation_db")},
    "switch": {"loss": _LOSS, "isolation": ("loss", "isolation_db"), "selected": ("str", "selected")},
    "waveplate": {
        "relative_phase": ("angle", "relative_phase"),
        "offset_angle": ("angle", "offset_angle"),
        "loss": _LOSS,
    },
    "fiber": {
        "attenuation": ("loss_per_length", "alpha_db_per_km"),
        "length": ("length", "length_km"),
        "delay_per_length": ("delay_per_length", "delay_per_km"),
        "disturbance": ("table", None),
    },
    "faraday_mirror": {"loss": _LOSS, "theta": ("angle", "theta")},
}

DISTURBANCE_KINDS = {"phase": "angle", "delta_phase": "angle", "alpha": "dimensionless",
                     "beta": "dimensionless"}


@dataclass
class NodeSpec:
    name: str
    role: str  # "source" | "device" | "detector"
    kind: str
    params: dict = field(default_factory=dict)
    line: int | None = None

    def schema(self):
        if self.role == "source":
            return SOURCE_SCHEMA
        if self.role == "detector":
            return DETECTOR_SCHEMA
        return DEVICE_SCHEMAS[self.kind]

    def ports(self):
        if self.role == "source":
            return (), ("out",)
        if self.role == "detector":
            return ("in",), ()
        cls = components.DEVICE_KINDS[self.kind]
        return cls.in_ports, cls.out_ports


@dataclass(frozen=True)
class Link:
    route: str
    src: str
    src_port: str
    dst: str
    dst_port: str
    delay: float = 0.0
    line: int | None = None


@dataclass
class Sweep:
    parameter: str
    values: tuple


@dataclass
class ExperimentSpec:
    trials: int = 1000
    seed: int = 1
    sweep: Sweep | None = None
    coincidences: tuple = ()
    report: str | None = None
    analytic: bool = False
    max_events: int = 100_000


def _source_params(spec, route):
    p = spec.params
    pol = JonesPolarization()
    if "polarization_angle" in p:
        pol = JonesPolarization.linear(p["polarization_angle"])
    elif "alpha" in p or "beta" in p:
        pol = JonesPolarization(p.get("alpha", 0.0), p.get("beta", 0.0), p.get("delta_phase", 0.0))
    kwargs = {f: p[k] for k, (_, f) in SOURCE_SCHEMA.items() if f and k in p}
    kwargs["spectrum"] = SpectralMode(
        p.get("center_frequency", 2 * math.pi * 193.4e12), p.get("spectral_sigma", 2 * math.pi * 65e9)
    )
    kwargs["polarization"] = pol
    if "truncation" in kwargs:
        kwargs["truncation"] = int(kwargs["truncation"])
    if "session_pulses" in kwargs:
        kwargs["session_pulses"] = int(kwargs["session_pulses"])
    return SourceParams(emit_route=route, **kwargs)


def _detector_params(spec, default_period):
    p = spec.params
    kwargs = {f: p[k] for k, (_, f) in DETECTOR_SCHEMA.items() if k in p}
    kwargs.setdefault("gate_period", default_period)
    return SpdParams(**kwargs)


def _device(spec, inputs, outputs):
    cls = components.DEVICE_KINDS[spec.kind]
    schema = DEVICE_SCHEMAS[spec.kind]
    p = spec.params
    kwargs = {f: p[k] for k, (_, f) in schema.items() if f and k in p}
    if spec.kind == "polarization_modulator" and "polarization_angle" in p:
        pol = JonesPolarization.linear(p["polarization_angle"])
        kwargs.update(alpha=pol.alpha, beta=pol.beta, delta_phase=pol.delta_phase)
    if spec.kind == "circulator" and "cycle" in kwargs:
        kwargs["cycle"] = tuple(str(c) for c in kwargs["cycle"])
    if spec.kind == "fiber" and "disturbance" in p:
        kwargs["disturbance"] = tuple(
            (name, d.get("mean", 0.0), d.get("sigma", 0.0)) for name, d in sorted(p["disturbance"].items())
        )
    return cls(name=spec.name, inputs=tuple(inputs), outputs=tuple(outputs), **kwargs)


def _exit_ports(device, port):
    """Output ports reachable from an input port (for cycle analysis)."""
    if isinstance(device, (components.BsParams, components.PbsParams)):
        return ("c", "d")
    if isinstance(device, components.Circulator):
        i = device.cycle.index(port)
        return (device.cycle[(i + 1) % 3],)
    if isinstance(device, components.OpticalSwitch):
        return ("out1", "out2")
    if isinstance(device, components.FaradayMirror):
        return ("out",)
    return ("out",) if port == "in" else ("in",)


class Topology:
    """Validated netlist plus its compiled runtime objects."""

    def __init__(self, nodes, links, experiment=None, path=None):
        self.nodes = dict(nodes)
        self.links = tuple(links)
        self.experiment = experiment
        self.path = path
        self._compile()

    # -- construction ---------------------------------------------------------

    def _err(self, message, line=None):
        return ConfigError(message, self.path, line)

    def _compile(self):
        routes = {}
        producers = {}
        consumers = {}
        for link in self.links:
            for node, port, side in ((link.src, link.src_port, "out"), (link.dst, link.dst_port, "in")):
                if node not in self.nodes:
                    raise self._err(f"link {link.route!r} refers to unknown node {node!r}", link.line)
                ins, outs = self.nodes[node].ports()
                valid = outs if side == "out" else ins
                if port not in valid:
                    raise self._err(
                        f"link {link.route!r}: node {node!r} has no {side}put port {port!r}"
                        f" (valid: {', '.join(valid) or 'none'})",
                        link.line,
                    )
            if link.route in routes:
                raise self._err(f"route {link.route!r} declared twice", link.line)
            if (link.src, link.src_port) in producers:
                raise self._err(
                    f"port {link.src}.{link.src_port} already produces route "
                    f"{producers[(link.src, link.src_port)]!r}",
                    link.line,
                )
            if (link.dst, link.dst_port) in consumers:
                raise self._err(
                    f"port {link.dst}.{link.dst_port} already consumes route "
                    f"{consumers[(link.dst, link.dst_port)]!r}",
                    link.line,
                )
            if link.route.startswith("loss:"):
                raise self._err("route names may not start with 'loss:'", link.line)
            if not link.delay >= 0:
                raise self._err(f"link {link.route!r} has a negative delay", link.line)
            routes[link.route] = link
            producers[(link.src, link.src_port)] = link.route
            consumers[(link.dst, link.dst_port)] = link.route
        self.routes = routes

        sources = {n: s for n, s in self.nodes.items() if s.role == "source"}
        default_period = 1e-8
        for name in sorted(sources):
            default_period = sources[name].params.get("repetition_period", default_period)
            break

        self.sources = {}
        self.devices = {}
        self.detectors = {}
        self.consumer = {}
        for name in sorted(self.nodes):
            spec = self.nodes[name]
            try:
                if spec.role == "source":
                    route = producers.get((name, "out"), f"{name}.out")
                    self.sources[name] = (_source_params(spec, route), spec.params.get("emit_time", 0.0))
                elif spec.role == "detector":
                    route = consumers.get((name, "in"))
                    if route is None:
                        raise self._err(f"detector {name!r} has no input link", spec.line)
                    self.detectors[name] = (_detector_params(spec, default_period), route)
                    self.consumer[route] = ("detector", name)
                else:
                    ins, outs = spec.ports()
                    inputs = [(p, consumers[(name, p)]) for p in ins if (name, p) in consumers]
                    outputs = [(p, producers[(name, p)]) for p in outs if (name, p) in producers]
                    dev = _device(spec, inputs, outputs)
                    self.devices[name] = dev
                    for _, r in inputs:
                        self.consumer[r] = ("device", name)
            except ConfigError:
                raise
            except (FockError, TypeError, ValueError) as exc:
                raise self._err(f"{spec.role} {name!r}: {exc}", spec.line) from exc
        if not self.sources:
            raise self._err("netlist declares no sources")
        self._check_zero_delay_cycles()

    def _check_zero_delay_cycles(self):
        graph = {}
        for route in self.routes:
            graph.setdefault(route, set())
            target = self.consumer.get(route)
            if target is None or target[0] != "device":
                continue
            dev = self.devices[target[1]]
            port = dev.route_ports()[route]
            for out_port in _exit_ports(dev, port):
                nxt = dev.out_route(out_port)
                if nxt in self.routes and dev.latency + self.routes[nxt].delay == 0:
                    # graphlib expects predecessors
                    graph.setdefault(nxt, set()).add(route)
        try:
            order = tuple(graphlib.TopologicalSorter({r: sorted(p) for r, p in sorted(graph.items())}).static_order())
        except graphlib.CycleError as exc:
            cycle = " -> ".join(exc.args[1])
            raise self._err(f"zero-delay cycle through routes {cycle}") from None
        # causal rank of each route among simultaneous events
        self.route_rank = {r: i for i, r in enumerate(order)}
        # device output route -> latency + link delay
        self.output_delays = {
            name: tuple((r, dev.latency + self.link_delay(r)) for _, r in dev.outputs)
            for name, dev in self.devices.items()
        }
        # a node fires after all of its simultaneous inputs have arrived
        self.fire_rank = {}
        for name, dev in self.devices.items():
            ins = [self.route_rank[r] for _, r in dev.inputs]
            self.fire_rank[name] = 2 * max(ins) + 1 if ins else 0
        for name, (_, route) in self.detectors.items():
            self.fire_rank[name] = 2 * self.route_rank[route] + 1

    # -- queries ----------------------------------------------------------------

    def link_delay(self, route):
        link = self.routes.get(route)
        return link.delay if link else 0.0

    def parameter_kind(self, path):
        node, *keys = path.split(".")
        if node not in self.nodes or not keys:
            raise ConfigError(f"unknown parameter {path!r}", self.path)
        spec = self.nodes[node]
        schema = spec.schema()
        if keys[0] == "disturbance" and len(keys) == 3 and keys[1] in DISTURBANCE_KINDS:
            return DISTURBANCE_KINDS[keys[1]]
        if len(keys) != 1 or keys[0] not in schema:
            raise ConfigError(f"unknown parameter {path!r}", self.path)
        return schema[keys[0]][0]

    def with_parameter(self, path, value):
        """Copy of this topology with one node parameter replaced."""
        self.parameter_kind(path)
        node, *keys = path.split(".")
        nodes = {n: copy.deepcopy(s) for n, s in self.nodes.items()}
        target = nodes[node].params
        for k in keys[:-1]:
            target = target.setdefault(k, {})
        target[keys[-1]] = value
        if keys[0] == "polarization_angle":
            for k in ("alpha", "beta"):
                nodes[node].params.pop(k, None)
        return Topology(nodes, self.links, self.experiment, self.path)

    def with_experiment(self, experiment):
        out = copy.copy(self)
        out.experiment = experiment
        return out

    def summary(self):
        return {
            "nodes": len(self.nodes),
            "routes": len(self.routes),
            "sources": sorted(self.sources),
            "devices": sorted(self.devices),
            "detectors": sorted(self.detectors),
        }
