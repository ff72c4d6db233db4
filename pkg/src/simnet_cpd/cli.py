"""Command-line entry point.

Subcommands: ``simulate``, ``calibrate``, ``detect``, ``edd-sweep``,
``isolate`` and ``bounds``. Every report is JSON and embeds the resolved
config and seed; tables and plot data are CSV. A failing command leaves a
``FAILED`` marker in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from simnet_cpd import bounds, experiments
from simnet_cpd.datagen import spec_from_dict
from simnet_cpd.detector import run, write_trace
from simnet_cpd.graph_snapshot import SimilaritySnapshot
from simnet_cpd.isolation import isolate, naive_isolation
from simnet_cpd.stream_window import frames_from_array, read_csv, write_csv

log = logging.getLogger("simnet_cpd")

FAILURE_MARKER = "FAILED"
SEEDED = {"simulate", "calibrate", "edd-sweep", "isolate"}


class CLIError(Exception):
    pass


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dumps(report: dict[str, Any]) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    os.replace(tmp, path)


def load_config(path: str | None) -> tuple[dict[str, Any], int | None]:
    """Read a config file; a previous report is accepted and replayed."""
    if path is None:
        return {}, None
    data = json.loads(Path(path).read_text())
    if "command" in data and "config" in data:
        return dict(data["config"]), data.get("seed")
    return data, None


# commands --------------------------------------------------------------------


def cmd_simulate(cfg: dict[str, Any], seed: int, out: Path, args) -> dict[str, Any]:
    model = spec_from_dict(cfg.get("model", {"model": "trend"}))
    horizon = int(cfg.get("horizon", model.horizon))
    src = model.source(seed, int(cfg.get("replica", 0)))
    data = src.take(horizon)
    stream_path = out / "stream.csv"
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".stream.csv.")
    with os.fdopen(fd, "w", newline="") as fh:
        write_csv(frames_from_array(data), fh)
    os.replace(tmp, stream_path)
    resolved = {"model": model.to_dict(), "horizon": horizon, "replica": int(cfg.get("replica", 0))}
    report = {"command": "simulate", "seed": seed, "config": resolved, "rows": horizon, "columns": model.n_sensors + 1}
    _write_atomic(out / "stream.json", dumps(report))
    return report


def cmd_calibrate(cfg: dict[str, Any], seed: int, out: Path, args) -> dict[str, Any]:
    report = experiments.calibration_experiment(cfg, seed, args.parallel)
    _write_atomic(out / "calibration.json", dumps(report))
    return report


def cmd_detect(cfg: dict[str, Any], seed: int | None, out: Path, args) -> dict[str, Any]:
    source = args.input or cfg.get("input")
    if not source:
        raise CLIError("detect needs --input STREAM.csv")
    setup = experiments.setup_from(cfg)
    if "b" not in cfg:
        raise CLIError("detect config must set threshold 'b'")
    b = float(cfg["b"])
    result = run(read_csv(source), setup.w, setup.kind, setup.mask_array(), b)
    trace_path = out / "trace.csv"
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".trace.csv.")
    with os.fdopen(fd, "w", newline="") as fh:
        write_trace(result.trace, fh)
    os.replace(tmp, trace_path)
    report = {
        "command": "detect",
        "seed": seed,
        "config": {**setup.to_dict(), "b": b, "input": str(source)},
        "T": result.T,
        "censored": result.censored,
        "horizon": result.horizon,
        "argmax_node": result.argmax_node,
        "max_rho": None if not result.trace else float(np.nanmax(result.trace[-1][1])),
        "evaluated_ticks": len(result.trace),
    }
    _write_atomic(out / "alarm.json", dumps(report))
    return report


def cmd_edd_sweep(cfg: dict[str, Any], seed: int, out: Path, args) -> dict[str, Any]:
    if "b" not in cfg and "calibration" in cfg:
        cfg = {**cfg, "b": json.loads(Path(cfg["calibration"]).read_text())["b"]}
    if "b" not in cfg:
        raise CLIError("edd-sweep config needs 'b' or a 'calibration' report path")
    report = experiments.edd_sweep_experiment(cfg, seed, args.parallel)
    field = report["config"]["sweep"]["field"]
    _write_csv_rows(
        out / "edd_sweep.csv",
        [field, "edd", "se", "replicas", "detected", "censored", "false_alarms"],
        [[r[field], r["edd"], r["se"], r["replicas"], r["detected"], r["censored"], r["false_alarms"]] for r in report["rows"]],
    )
    _write_csv_rows(
        out / "edd_replicas.csv",
        [field, "replica", "T", "delay"],
        [[r[field], r["replica"], r["T"], r["delay"]] for r in report["per_replica"]],
    )
    slim = {k: v for k, v in report.items() if k != "per_replica"}
    _write_atomic(out / "edd_sweep.json", dumps(slim))
    return slim


def cmd_isolate(cfg: dict[str, Any], seed: int, out: Path, args) -> dict[str, Any]:
    source = args.input or cfg.get("input")
    if not source:
        raise CLIError("isolate needs --input SNAPSHOT.json")
    snap = SimilaritySnapshot.load(source)
    method = cfg.get("method", "spectral+refine")
    methods = ["brute_force", "spectral", "spectral+refine"] if method == "all" else [method]
    results = []
    for m in methods:
        if m == "brute_force" and snap.n > 20:
            continue
        results.append(isolate(snap, m, seed).to_dict())
    report: dict[str, Any] = {
        "command": "isolate",
        "seed": seed,
        "config": {"method": method, "input": str(source), **({"naive_threshold": cfg["naive_threshold"]} if "naive_threshold" in cfg else {})},
        "t": snap.t,
        "n": snap.n,
        "results": results,
    }
    if "naive_threshold" in cfg:
        report["naive"] = sorted(naive_isolation(snap, float(cfg["naive_threshold"])))
    _write_atomic(out / "isolation.json", dumps(report))
    return report


def cmd_bounds(cfg: dict[str, Any], seed: int | None, out: Path, args) -> dict[str, Any]:
    inputs = json.loads(Path(args.input).read_text()) if args.input else cfg
    report = {"command": "bounds", "seed": seed, "config": inputs, "results": bounds.bounds_report(inputs)}
    _write_atomic(out / "bounds.json", dumps(report))
    return report


COMMANDS: dict[str, Callable] = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "detect": cmd_detect,
    "edd-sweep": cmd_edd_sweep,
    "isolate": cmd_isolate,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simnet-cpd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (or a previous report to replay)")
        p.add_argument("--seed", type=int, help="root seed for all randomness")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--parallel", type=int, default=1, help="Monte Carlo worker processes")
        p.add_argument("--input", help="input file (stream CSV, snapshot JSON or bounds JSON)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILURE_MARKER
    try:
        cfg, replay_seed = load_config(args.config)
        seed = args.seed if args.seed is not None else replay_seed
        if seed is None and args.command in SEEDED:
            raise CLIError(f"{args.command} requires --seed")
        if args.parallel < 1:
            raise CLIError("--parallel must be at least 1")
        report = COMMANDS[args.command](cfg, seed, out, args)
    except Exception as exc:  # noqa: BLE001 - any failure must leave the marker
        marker.write_text(f"{args.command}: {type(exc).__name__}: {exc}\n")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if marker.exists():
        marker.unlink()
    log.info("%s finished", args.command)
    print(json.dumps({"command": args.command, "out": str(out)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
