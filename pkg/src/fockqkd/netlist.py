"""Netlist reader: TOML or JSON text to a validated :class:`Topology`.

Grammar (TOML shown; JSON uses the same nesting)::

    [sources.<name>]      kind = "single_photon" | "weak_coherent", plus source keys
    [devices.<name>]      kind = <device kind>, plus that kind's keys
    [detectors.<name>]    detector keys
    [[links]]             route = "...", from = "<node>.<port>", to = "<node>.<port>", delay = "0 ps"
    [experiment]          trials, seed, mode, coincidences, report
    [experiment.sweep]    parameter = "<node>.<key>", start, stop, points

Every physical quantity is a string with a unit suffix ("3 dB", "65 GHz",
"0.5 rad"); plain numbers are accepted only for dimensionless keys.
"""

from __future__ import annotations

import json
import re
import sys

import numpy as np

from .components import DEVICE_KINDS
from .errors import ConfigError, FockError
from .topology import (
    DEVICE_SCHEMAS,
    DISTURBANCE_KINDS,
    DETECTOR_SCHEMA,
    SOURCE_SCHEMA,
    ExperimentSpec,
    Link,
    NodeSpec,
    Sweep,
    Topology,
)
from .units import parse_quantity

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = ("sources", "devices", "detectors", "links", "experiment")
EXPERIMENT_KEYS = ("trials", "seed", "mode", "sweep", "coincidences", "report", "max_events")
SWEEP_KEYS = ("parameter", "start", "stop", "points")
LINK_KEYS = ("route", "from", "to", "delay")
REPORTS = ("mzi", "hom_pol", "hom_delay")


class _Locator:
    """Best-effort line numbers for config objects, found by searching the source text."""

    def __init__(self, text, is_json):
        self.lines = text.splitlines()
        self.is_json = is_json

    def _first(self, pattern, start=0, nth=0):
        rx = re.compile(pattern)
        seen = 0
        for i in range(start, len(self.lines)):
            if rx.search(self.lines[i]):
                if seen == nth:
                    return i + 1
                seen += 1
        return None

    def node(self, section, name):
        if self.is_json:
            sec = self._first(rf'"{re.escape(section)}"\s*:') or 1
            return self._first(rf'"{re.escape(name)}"\s*:', sec - 1) or sec
        return self._first(rf"^\s*\[\s*{re.escape(section)}\.{re.escape(name)}\s*\]")

    def key(self, section, name, key):
        start = self.node(section, name)
        if start is None:
            return None
        pattern = rf'"{re.escape(key)}"\s*:' if self.is_json else rf"^\s*{re.escape(key)}\s*="
        return self._first(pattern, start - 1) or start

    def link(self, index):
        if self.is_json:
            sec = self._first(r'"links"\s*:') or 1
            return self._first(r'"route"\s*:', sec - 1, index) or sec
        return self._first(r"^\s*\[\[\s*links\s*\]\]", 0, index)

    def section(self, section):
        if self.is_json:
            return self._first(rf'"{re.escape(section)}"\s*:')
        return self._first(rf"^\s*\[\s*{re.escape(section)}\s*[\].]")


def _convert(value, kind, where):
    try:
        if kind == "str":
            if not isinstance(value, str):
                raise ValueError(f"expected a string, got {value!r}")
            return value
        if kind == "bool":
            if not isinstance(value, bool):
                raise ValueError(f"expected true/false, got {value!r}")
            return value
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"expected an integer, got {value!r}")
            return value
        if kind == "list":
            if not isinstance(value, list):
                raise ValueError(f"expected a list, got {value!r}")
            return list(value)
        return parse_quantity(value, kind)
    except (ValueError, FockError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _disturbance(table, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table of parameter -> {{mean, sigma}}")
    out = {}
    for name, spec in table.items():
        if name not in DISTURBANCE_KINDS:
            raise ConfigError(f"{where}: cannot disturb {name!r} (valid: {', '.join(DISTURBANCE_KINDS)})")
        if not isinstance(spec, dict) or set(spec) - {"mean", "sigma"}:
            raise ConfigError(f"{where}.{name}: expected keys mean and sigma")
        kind = DISTURBANCE_KINDS[name]
        out[name] = {k: _convert(v, kind, f"{where}.{name}.{k}") for k, v in spec.items()}
    return out


def _node(section, name, body, loc):
    if not isinstance(body, dict):
        raise ConfigError(f"{section}.{name} must be a table", line=loc.node(section, name))
    body = dict(body)
    line = loc.node(section, name)
    if section == "sources":
        role, kind, schema = "source", body.get("kind", "single_photon"), SOURCE_SCHEMA
    elif section == "detectors":
        role, kind, schema = "detector", body.pop("kind", "spd"), DETECTOR_SCHEMA
        if kind != "spd":
            raise ConfigError(f"detector {name!r}: unknown detector kind {kind!r}", line=line)
    else:
        role = "device"
        kind = body.pop("kind", None)
        if kind not in DEVICE_KINDS:
            raise ConfigError(
                f"device {name!r}: unknown device kind {kind!r} (valid: {', '.join(sorted(DEVICE_KINDS))})",
                line=line,
            )
        schema = DEVICE_SCHEMAS[kind]
    if "." in name or not name:
        raise ConfigError(f"node name {name!r} must be non-empty and contain no '.'", line=line)
    params = {}
    for key, value in body.items():
        where = f"{section}.{name}.{key}"
        key_line = loc.key(section, name, key)
        if key not in schema:
            raise ConfigError(
                f"unknown key {where!r} (valid: {', '.join(sorted(schema))})", line=key_line
            )
        try:
            if schema[key][0] == "table":
                params[key] = _disturbance(value, where)
            else:
                params[key] = _convert(value, schema[key][0], where)
        except ConfigError as exc:
            raise ConfigError(exc.message, line=key_line) from None
    return NodeSpec(name, role, kind, params, line)


def _endpoint(text, where, line):
    if not isinstance(text, str) or text.count(".") != 1:
        raise ConfigError(f"{where}: expected '<node>.<port>', got {text!r}", line=line)
    node, port = text.split(".")
    return node, port


def _links(raw, loc):
    if not isinstance(raw, list):
        raise ConfigError("links must be an array of tables", line=loc.section("links"))
    links = []
    for i, item in enumerate(raw):
        line = loc.link(i)
        if not isinstance(item, dict):
            raise ConfigError(f"links[{i}] must be a table", line=line)
        unknown = set(item) - set(LINK_KEYS)
        if unknown:
            raise ConfigError(f"links[{i}]: unknown key(s) {', '.join(sorted(unknown))}", line=line)
        for key in ("route", "from", "to"):
            if key not in item:
                raise ConfigError(f"links[{i}]: missing {key!r}", line=line)
        route = _convert(item["route"], "str", f"links[{i}].route")
        src, src_port = _endpoint(item["from"], f"links[{i}].from", line)
        dst, dst_port = _endpoint(item["to"], f"links[{i}].to", line)
        try:
            delay = _convert(item.get("delay", "0 s"), "time", f"links[{i}].delay")
        except ConfigError as exc:
            raise ConfigError(exc.message, line=line) from None
        links.append(Link(route, src, src_port, dst, dst_port, delay, line))
    return links


def _experiment(raw, topology, loc):
    line = loc.section("experiment")
    if not isinstance(raw, dict):
        raise ConfigError("experiment must be a table", line=line)
    unknown = set(raw) - set(EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f"experiment: unknown key(s) {', '.join(sorted(unknown))}", line=line)
    exp = ExperimentSpec()
    if "trials" in raw:
        exp.trials = _convert(raw["trials"], "int", "experiment.trials")
        if exp.trials < 0:
            raise ConfigError("experiment.trials must be >= 0", line=line)
    if "seed" in raw:
        exp.seed = _convert(raw["seed"], "int", "experiment.seed")
    if "max_events" in raw:
        exp.max_events = _convert(raw["max_events"], "int", "experiment.max_events")
    if "mode" in raw:
        mode = _convert(raw["mode"], "str", "experiment.mode")
        if mode not in ("monte_carlo", "analytic"):
            raise ConfigError(f"experiment.mode must be monte_carlo or analytic, got {mode!r}", line=line)
        exp.analytic = mode == "analytic"
    if "report" in raw:
        exp.report = _convert(raw["report"], "str", "experiment.report")
        if exp.report not in REPORTS:
            raise ConfigError(f"experiment.report must be one of {', '.join(REPORTS)}", line=line)
    detectors = sorted(topology.detectors)
    if "coincidences" in raw:
        pairs = []
        for pair in _convert(raw["coincidences"], "list", "experiment.coincidences"):
            if not (isinstance(pair, list) and len(pair) == 2 and all(p in topology.detectors for p in pair)):
                raise ConfigError(f"experiment.coincidences: bad detector pair {pair!r}", line=line)
            pairs.append(tuple(pair))
        exp.coincidences = tuple(pairs)
    else:
        exp.coincidences = tuple(
            (a, b) for i, a in enumerate(detectors) for b in detectors[i + 1:]
        )
    if "sweep" in raw:
        sweep = raw["sweep"]
        sline = loc.section("experiment.sweep") or line
        if not isinstance(sweep, dict):
            raise ConfigError("experiment.sweep must be a table", line=sline)
        unknown = set(sweep) - set(SWEEP_KEYS)
        missing = set(SWEEP_KEYS) - set(sweep)
        if unknown or missing:
            raise ConfigError(
                f"experiment.sweep needs exactly {', '.join(SWEEP_KEYS)}", line=sline
            )
        path = _convert(sweep["parameter"], "str", "experiment.sweep.parameter")
        try:
            kind = topology.parameter_kind(path)
        except ConfigError as exc:
            raise ConfigError(exc.message, line=sline) from None
        if kind not in ("str", "bool", "int", "list", "table"):
            start = _convert(sweep["start"], kind, "experiment.sweep.start")
            stop = _convert(sweep["stop"], kind, "experiment.sweep.stop")
        else:
            raise ConfigError(f"cannot sweep non-numeric parameter {path!r}", line=sline)
        points = _convert(sweep["points"], "int", "experiment.sweep.points")
        if points < 1:
            raise ConfigError("experiment.sweep.points must be >= 1", line=sline)
        exp.sweep = Sweep(path, tuple(float(v) for v in np.linspace(start, stop, points)))
    return exp


def parse_netlist(text, path=None):
    """Parse netlist text; JSON if it starts with '{', TOML otherwise."""
    is_json = text.lstrip().startswith("{")
    try:
        if is_json:
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON syntax error: {exc.msg}", path, exc.lineno) from None
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", path, int(m.group(1)) if m else None) from None
    if not isinstance(data, dict):
        raise ConfigError("netlist must be a table at top level", path)
    return data, _Locator(text, is_json)


def load_topology(text, path=None):
    """Parse and validate a netlist; errors carry path and line when known."""
    data, loc = parse_netlist(text, path)
    try:
        unknown = set(data) - set(SECTIONS)
        if unknown:
            name = sorted(unknown)[0]
            raise ConfigError(
                f"unknown section {name!r} (valid: {', '.join(SECTIONS)})", line=loc.section(name)
            )
        nodes = {}
        for section in ("sources", "devices", "detectors"):
            raw = data.get(section, {})
            if not isinstance(raw, dict):
                raise ConfigError(f"{section} must be a table", line=loc.section(section))
            for name, body in raw.items():
                if name in nodes:
                    raise ConfigError(f"node name {name!r} used twice", line=loc.node(section, name))
                nodes[name] = _node(section, name, body, loc)
        links = _links(data.get("links", []), loc)
        topology = Topology(nodes, links, None, path)
        topology.experiment = _experiment(data.get("experiment", {}), topology, loc)
    except ConfigError as exc:
        if exc.path is None:
            exc = ConfigError(exc.message, path, exc.line)
        raise exc from None
    return topology


def load_topology_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read netlist: {exc.strerror}", str(path)) from None
    return load_topology(text, str(path))
