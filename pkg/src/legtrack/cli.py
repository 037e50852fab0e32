"""Command-line entry point: ``legtrack <command> [options]``.

Commands
--------
simulate     synthetic marker stream (+ session config and ground truth)
track        config + stream -> per-sample rigid-body poses (JSON)
angles       config + stream -> angle report (JSON)
consistency  config + stream -> cross-route error table (JSON)
validate     lint a session config

Exit status is 0 on success.  On failure a one-line JSON object
``{"error": <code>, "message": <text>}`` goes to stderr and the status is
2 for input/config errors and 1 for I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from . import pipeline, simulate
from .config import load_config
from .errors import TrackingError
from .streamio import read_marker_stream, write_marker_stream, emit_marker_stream

SCRIPTS = {"default": simulate.default_script, "sweep": simulate.sweep_script, "zero": simulate.MotionScript.zeros}


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, "utf-8")


def _truth_csv(traj: simulate.Trajectory) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("time_s", *simulate.CHANNELS))
    for t, row in zip(traj.times, traj.script.commands):
        w.writerow((repr(float(t)), *(repr(float(x)) for x in row)))
    return out.getvalue()


def cmd_simulate(args) -> None:
    noise = simulate.NoiseSpec(
        marker_sigma_mm=args.noise_sigma_mm,
        landmark_sigma_mm=args.landmark_sigma_mm,
        occlusion_prob=args.occlusion_prob,
        seed=args.seed,
    )
    params = simulate.LegModelParams()
    script = SCRIPTS[args.script](args.duration, args.rate)
    stream, table, traj = simulate.synthesize(params, script, noise)
    if args.output in (None, "-"):
        sys.stdout.write(emit_marker_stream(stream))
    else:
        write_marker_stream(stream, args.output)
    if args.config_out:
        Path(args.config_out).write_text(simulate.session_config(params, table).dumps() + "\n", "utf-8")
    if args.truth:
        Path(args.truth).write_text(_truth_csv(traj), "utf-8")


def _load(args):
    config = load_config(args.config).validate()
    return config, read_marker_stream(args.input)


def cmd_track(args) -> None:
    config, stream = _load(args)
    _write(pipeline.dumps(pipeline.pose_report(pipeline.track(config, stream))), args.output)


def cmd_angles(args) -> None:
    config, stream = _load(args)
    _write(pipeline.dumps(pipeline.angle_report(pipeline.track(config, stream))), args.output)


def cmd_consistency(args) -> None:
    config, stream = _load(args)
    _write(pipeline.dumps(pipeline.consistency_report(pipeline.track(config, stream))), args.output)


def cmd_validate(args) -> None:
    config = load_config(args.config).validate()
    _write(pipeline.dumps({"ok": True, "frames": config.frame_ids()}), args.output)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="legtrack", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic marker stream")
    p.add_argument("--output", "-o", help="stream CSV (stdout if omitted)")
    p.add_argument("--config-out", help="write the matching session config JSON here")
    p.add_argument("--truth", help="write commanded joint values CSV here")
    p.add_argument("--script", choices=sorted(SCRIPTS), default="default")
    p.add_argument("--duration", type=float, default=300.0, help="seconds")
    p.add_argument("--rate", type=float, default=100.0, help="Hz")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma-mm", type=float, default=0.0, help="marker noise per axis")
    p.add_argument("--landmark-sigma-mm", type=float, default=0.0, help="CT landmark noise per axis")
    p.add_argument("--occlusion-prob", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)

    for name, func, text in (
        ("track", cmd_track, "rigid-body poses per sample"),
        ("angles", cmd_angles, "hip/knee angles and knee translation per sample"),
        ("consistency", cmd_consistency, "cross-route point errors per sample"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", "-c", required=True)
        p.add_argument("--input", "-i", required=True, help="marker stream CSV")
        p.add_argument("--output", "-o", help="report JSON (stdout if omitted)")
        p.set_defaults(func=func)

    p = sub.add_parser("validate", help="check a session config")
    p.add_argument("--config", "-c", required=True)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_validate)
    return parser


def _fail(code: str, message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}, sort_keys=True) + "\n")
    return status


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except TrackingError as exc:
        return _fail(exc.code, str(exc), 2)
    except OSError as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
