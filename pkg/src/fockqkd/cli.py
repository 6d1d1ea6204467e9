"""Command-line front end: built-in MZI / HOM experiments and netlist runs.

Exit codes: 0 success, 1 theory not contained (ideal-device runs only),
2 usage / configuration / missing-file errors, 3 simulation failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, theory
from .engine import run_experiment
from .errors import ConfigError, FockError
from .netlist import load_topology
from .topology import Sweep
from .units import parse_quantity

OUT_ENV = "FOCKQKD_OUT"
DEFAULT_OUT = "fockqkd-out"

MZI_COLUMNS = ["phase_rad", "p_d1", "p_d1_lo", "p_d1_hi", "p_d2", "p_d2_lo", "p_d2_hi",
               "theory_d1", "theory_d2"]
HOM_POL_COLUMNS = ["delta_theta_rad", "p_coinc", "p_coinc_lo", "p_coinc_hi", "theory"]
HOM_DELAY_COLUMNS = ["delay_s", "p_coinc", "p_coinc_lo", "p_coinc_hi", "theory"]
RECORD_COLUMNS = ["trial", "detector_id", "clicked", "photon_count", "timestamp_s", "aborted"]


class UsageError(Exception):
    pass


# -- helpers ------------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    if isinstance(value, np.floating):
        return repr(float(value))
    return str(value)


def _csv_text(columns, rows, meta):
    buf = io.StringIO()
    for key, value in meta:
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _bundled(name):
    return resources.files("fockqkd").joinpath("netlists", name).read_text(encoding="utf-8")


def _load(config, bundled):
    if config is None:
        text, path = _bundled(bundled), f"<bundled>/{bundled}"
    else:
        try:
            text = Path(config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read netlist: {exc.strerror}", config) from None
        path = config
    return load_topology(text, path), text, path


def _quantity(text, kind, flag):
    try:
        return parse_quantity(text, kind, allow_bare=True)
    except FockError as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _override_value(topology, path, raw):
    kind = topology.parameter_kind(path)
    if kind == "bool":
        if raw.lower() not in ("true", "false"):
            raise UsageError(f"--set {path}: expected true or false")
        return raw.lower() == "true"
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise UsageError(f"--set {path}: expected an integer") from None
    if kind == "str":
        return raw
    if kind in ("list", "table"):
        raise UsageError(f"--set {path}: cannot override a {kind} parameter")
    return _quantity(raw, kind, f"--set {path}")


def _apply_overrides(topology, overrides):
    for item in overrides or ():
        if "=" not in item:
            raise UsageError(f"--set expects path=value, got {item!r}")
        path, raw = item.split("=", 1)
        path = path.strip()
        topology = topology.with_parameter(path, _override_value(topology, path, raw.strip()))
    return topology


def _out_dir(args):
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _meta(seed, config_text, trials):
    return [
        ("tool", f"fockqkd {__version__}"),
        ("seed", seed),
        ("trials", trials),
        ("config_sha256", hashlib.sha256(config_text.encode()).hexdigest()),
    ]


class _Outputs:
    """Manifest-first output writer."""

    def __init__(self, out, command, config_path, seed, overrides):
        self.out = out
        self.manifest = {
            "tool": "fockqkd",
            "version": __version__,
            "command": command,
            "config": config_path,
            "seed": seed,
            "output_dir": str(out),
            "overrides": list(overrides or ()),
            "status": "running",
            "files": {},
        }

    def _write_manifest(self):
        (self.out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")

    def start(self):
        self.out.mkdir(parents=True, exist_ok=True)
        self._write_manifest()

    def write(self, name, text):
        (self.out / name).write_text(text, encoding="utf-8")
        self.manifest["files"][name] = hashlib.sha256(text.encode()).hexdigest()

    def finish(self):
        self.manifest["status"] = "complete"
        self._write_manifest()


def _records_csv(records, meta):
    rows = [
        {"trial": r.trial_index, "detector_id": r.detector_id, "clicked": r.clicked,
         "photon_count": r.photon_count, "timestamp_s": float(r.timestamp), "aborted": r.aborted}
        for r in records
    ]
    return _csv_text(RECORD_COLUMNS, rows, meta)


def _write_records(outputs, topology, records, meta):
    for name in sorted(topology.detectors):
        mine = [r for r in records if r.detector_id == name]
        outputs.write(f"records_{name}.csv", _records_csv(mine, meta))


def _extent(rows, trials, analytic):
    return f"{len(rows)} points, exact" if analytic else f"{len(rows)} points x {trials} trials"


def _contained(rows, pairs, max_misses):
    misses = 0
    for row in rows:
        if any(not (row[lo] <= row[th] <= row[hi]) for _, lo, hi, th in pairs):
            misses += 1
    return misses, misses <= max_misses


# -- reports ------------------------------------------------------------------


def _bs_tuple(dev):
    return dev.splitting_ratio_t, dev.splitting_ratio_r, dev.loss_db


def _detector_ideal(params):
    return (params.detection_efficiency == 1.0 and params.dark_count_rate == 0.0
            and params.afterpulse_prob == 0.0 and params.enabled and not params.gated)


def mzi_report(topology, result):
    """mzi.csv rows plus whether the device set is ideal."""
    rows = []
    ideal = True
    for stats in result.rows:
        top = topology.with_parameter("pm.phase", stats["value"])
        bs1, bs2, pm = top.devices["bs1"], top.devices["bs2"], top.devices["pm"]
        a1, a2 = theory.mzi_arrival(stats["value"], _bs_tuple(bs1), _bs_tuple(bs2),
                                    lower_loss_db=pm.loss_db)
        d1, d2 = top.detectors["d1"][0], top.detectors["d2"][0]
        t1 = theory.single_photon_click(a1, d1.detection_efficiency, d1.dark_probability, d1.afterpulse_prob)
        t2 = theory.single_photon_click(a2, d2.detection_efficiency, d2.dark_probability, d2.afterpulse_prob)
        ideal = ideal and _detector_ideal(d1) and _detector_ideal(d2) and all(
            b.splitting_ratio_t == 0.5 and b.loss_db == 0.0 for b in (bs1, bs2)
        ) and pm.loss_db == 0.0
        rows.append({
            "phase_rad": stats["value"],
            **{k: stats[k] for k in MZI_COLUMNS[1:7]},
            "theory_d1": float(t1),
            "theory_d2": float(t2),
        })
    return rows, ideal


def hom_report(topology, result, mode):
    pair = "c_d1_d2"
    rows = []
    ideal = all(_detector_ideal(p) for p, _ in topology.detectors.values())
    ideal = ideal and all(
        d.kind == "beamsplitter" and d.splitting_ratio_t == 0.5 and d.loss_db == 0.0
        for d in topology.devices.values()
    )
    sigma = topology.sources["src2"][0].spectrum.sigma
    for stats in result.rows:
        x = stats["value"]
        th = theory.hom_polarization(x) if mode == "pol" else theory.hom_delay(x, sigma)
        key = "delta_theta_rad" if mode == "pol" else "delay_s"
        rows.append({
            key: x,
            "p_coinc": stats[pair],
            "p_coinc_lo": stats[pair + "_lo"],
            "p_coinc_hi": stats[pair + "_hi"],
            "theory": float(th),
        })
    return rows, ideal


# -- commands -----------------------------------------------------------------


def _experiment(topology, args, sweep, trials, seed):
    return run_experiment(
        topology, sweep, trials, seed, jobs=args.jobs, analytic=args.analytic,
        keep_records=args.records,
    )


def _judge(rows, pairs, ideal, args, label):
    if not ideal:
        print(f"{label}: non-ideal devices; theory containment reported, not judged")
        return 0
    if args.analytic:
        worst = max(abs(r[p] - r[th]) for r in rows for p, _, _, th in pairs) if rows else 0.0
        print(f"{label}: exact mode, max |p - theory| = {worst:.3e}")
        return 0 if worst < 1e-12 else 1
    misses, ok = _contained(rows, pairs, args.max_misses)
    print(f"{label}: theory inside the 95% Wilson interval at {len(rows) - misses}/{len(rows)} points "
          f"(allowed misses: {args.max_misses}) -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_mzi(args):
    topology, text, path = _load(args.config, "mzi.toml")
    for node in ("bs1", "bs2", "pm", "d1", "d2"):
        if node not in topology.nodes:
            raise ConfigError(f"MZI report needs a node named {node!r}", path)
    topology = _apply_overrides(topology, args.set)
    if args.arm_loss is not None:
        topology = topology.with_parameter("pm.loss", _quantity(args.arm_loss, "loss", "--arm-loss"))
    exp = topology.experiment
    seed = exp.seed if args.seed is None else args.seed
    trials = exp.trials if args.trials is None else args.trials
    start = _quantity(args.phase_start, "angle", "--phase-start")
    stop = _quantity(args.phase_end, "angle", "--phase-end")
    if args.points < 1:
        raise UsageError("--points must be >= 1")
    sweep = Sweep("pm.phase", tuple(float(v) for v in np.linspace(start, stop, args.points)))
    outputs = _Outputs(_out_dir(args), "mzi", path, seed, args.set)
    outputs.start()
    result = _experiment(topology, args, sweep, trials, seed)
    meta = _meta(seed, text, trials)
    rows, ideal = mzi_report(topology, result)
    outputs.write("mzi.csv", _csv_text(MZI_COLUMNS, rows, meta))
    outputs.write("stats.csv", _csv_text(result.columns, result.rows, meta))
    if args.records:
        _write_records(outputs, topology, result.records, meta)
    outputs.finish()
    print(f"wrote {outputs.out / 'mzi.csv'} ({_extent(rows, trials, args.analytic)})")
    pairs = [("p_d1", "p_d1_lo", "p_d1_hi", "theory_d1"), ("p_d2", "p_d2_lo", "p_d2_hi", "theory_d2")]
    return _judge(rows, pairs, ideal, args, "mzi")


def cmd_hom(args):
    topology, text, path = _load(args.config, "hom.toml")
    for node in ("src1", "src2", "d1", "d2"):
        if node not in topology.nodes:
            raise ConfigError(f"HOM report needs a node named {node!r}", path)
    topology = _apply_overrides(topology, args.set)
    if args.sigma is not None:
        sigma = _quantity(args.sigma, "angular_frequency", "--sigma")
        if not sigma > 0:
            raise UsageError("--sigma must be > 0")
        for src in ("src1", "src2"):
            topology = topology.with_parameter(f"{src}.spectral_sigma", sigma)
    exp = topology.experiment
    seed = exp.seed if args.seed is None else args.seed
    trials = exp.trials if args.trials is None else args.trials
    if args.mode == "pol":
        parameter, kind = "src2.polarization_angle", "angle"
        start = _quantity(args.start or "0 rad", kind, "--start")
        stop = _quantity(args.end or repr(math.pi) + " rad", kind, "--end")
        points = args.points or 21
        columns = HOM_POL_COLUMNS
    else:
        parameter, kind = "src2.delay", "time"
        start = _quantity(args.start or "-60 ps", kind, "--start")
        stop = _quantity(args.end or "60 ps", kind, "--end")
        points = args.points or 25
        columns = HOM_DELAY_COLUMNS
    if points < 1:
        raise UsageError("--points must be >= 1")
    sweep = Sweep(parameter, tuple(float(v) for v in np.linspace(start, stop, points)))
    outputs = _Outputs(_out_dir(args), f"hom-{args.mode}", path, seed, args.set)
    outputs.start()
    result = run_experiment(topology, sweep, trials, seed, jobs=args.jobs, analytic=args.analytic,
                            keep_records=args.records, coincidences=[("d1", "d2")])
    meta = _meta(seed, text, trials)
    rows, ideal = hom_report(topology, result, args.mode)
    outputs.write("hom.csv", _csv_text(columns, rows, meta))
    outputs.write("stats.csv", _csv_text(result.columns, result.rows, meta))
    if args.records:
        _write_records(outputs, topology, result.records, meta)
    outputs.finish()
    sigma = topology.sources["src2"][0].spectrum.sigma
    print(f"wrote {outputs.out / 'hom.csv'} ({_extent(rows, trials, args.analytic)})")
    print(f"spectral FWHM = 2*sqrt(2 ln 2)*sigma = {theory.fwhm(sigma):.6g} rad/s (sigma = {sigma:.6g} rad/s)")
    return _judge(rows, [("p_coinc", "p_coinc_lo", "p_coinc_hi", "theory")], ideal, args, "hom")


def cmd_run(args):
    if args.config is None:
        raise UsageError("run needs --config")
    topology, text, path = _load(args.config, None)
    topology = _apply_overrides(topology, args.set)
    exp = topology.experiment
    seed = exp.seed if args.seed is None else args.seed
    trials = exp.trials if args.trials is None else args.trials
    args.analytic = args.analytic or exp.analytic
    outputs = _Outputs(_out_dir(args), "run", path, seed, args.set)
    outputs.start()
    args.records = not args.analytic
    result = _experiment(topology, args, exp.sweep, trials, seed)
    meta = _meta(seed, text, trials)
    outputs.write("stats.csv", _csv_text(result.columns, result.rows, meta))
    if args.records:
        _write_records(outputs, topology, result.records, meta)
    status = 0
    report = exp.report
    if report == "mzi" and exp.sweep is not None and exp.sweep.parameter == "pm.phase":
        rows, ideal = mzi_report(topology, result)
        outputs.write("mzi.csv", _csv_text(MZI_COLUMNS, rows, meta))
        pairs = [("p_d1", "p_d1_lo", "p_d1_hi", "theory_d1"), ("p_d2", "p_d2_lo", "p_d2_hi", "theory_d2")]
        status = _judge(rows, pairs, ideal, args, "mzi")
    elif report in ("hom_pol", "hom_delay") and exp.sweep is not None and ("d1", "d2") in exp.coincidences:
        mode = "pol" if report == "hom_pol" else "delay"
        rows, ideal = hom_report(topology, result, mode)
        cols = HOM_POL_COLUMNS if mode == "pol" else HOM_DELAY_COLUMNS
        outputs.write("hom.csv", _csv_text(cols, rows, meta))
        status = _judge(rows, [("p_coinc", "p_coinc_lo", "p_coinc_hi", "theory")], ideal, args, "hom")
    elif report is not None:
        print(f"report {report!r} skipped: netlist does not match the built-in layout")
    outputs.finish()
    for row in result.rows:
        multi = row["multiphoton_pulses"]
        print(f"point {row['point']}: value={_fmt(row['value'])} multiphoton pulses={multi} "
              f"aborted={row['aborted']}")
    print(f"wrote {outputs.out} ({', '.join(sorted(outputs.manifest['files']))})")
    return status


# -- argument parsing -----------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="netlist file (TOML or JSON)")
    p.add_argument("--trials", type=int, help="trials per sweep point (default: netlist value)")
    p.add_argument("--seed", type=int, help="master seed (default: netlist value)")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    p.add_argument("--analytic", action="store_true", help="exact probabilities instead of sampling")
    p.add_argument("--set", action="append", metavar="NODE.KEY=VALUE",
                   help="override a netlist parameter, e.g. bs1.loss='1 dB' (repeatable)")
    p.add_argument("--records", action="store_true", help="also write per-detector record CSVs")
    p.add_argument("--max-misses", type=int, default=2,
                   help="sweep points allowed outside the Wilson interval before exit code 1")


def build_parser():
    parser = argparse.ArgumentParser(prog="fockqkd", description="Fock-basis QKD optics simulator")
    parser.add_argument("--version", action="version", version=f"fockqkd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    mzi = sub.add_parser("mzi", help="Mach-Zehnder phase sweep")
    _common(mzi)
    mzi.add_argument("--phase-start", default="0 rad")
    mzi.add_argument("--phase-end", default=f"{2 * math.pi!r} rad")
    mzi.add_argument("--points", type=int, default=32)
    mzi.add_argument("--arm-loss", help="insertion loss of the phase-modulator arm, e.g. '3 dB'")
    mzi.set_defaults(func=cmd_mzi)

    hom = sub.add_parser("hom", help="Hong-Ou-Mandel dip (polarization or delay)")
    _common(hom)
    hom.add_argument("--mode", choices=("pol", "delay"), default="pol")
    hom.add_argument("--start", help="sweep start (angle for pol, time for delay)")
    hom.add_argument("--end", help="sweep end")
    hom.add_argument("--points", type=int)
    hom.add_argument("--sigma", help="spectral width of both photons, e.g. '65 GHz' (= 2*pi*65e9 rad/s)")
    hom.set_defaults(func=cmd_hom)

    run = sub.add_parser("run", help="run the experiment declared in a netlist")
    _common(run)
    run.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.trials is not None and args.trials < 0:
        parser.error("--trials must be >= 0")
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be >= 0")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fockqkd: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"fockqkd: config error: {exc}", file=sys.stderr)
        return 2
    except FockError as exc:
        print(f"fockqkd: simulation error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
