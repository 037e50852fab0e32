"""Marker stream CSV reading and writing.

Grammar (UTF-8, one observation per row)::

    time_s,body,label,x_mm,y_mm,z_mm,visible
    0.0,femur,H,1060.0,975.0,1200.0,1

Rows sharing a ``time_s`` form one sample; times must not decrease from row
to row.  ``visible`` is 0 or 1.  Coordinates are required when visible and
may be left empty when not.  A label may appear at most once per sample;
a label missing from a sample is treated as not visible.  The canonical
form written by :func:`emit_marker_stream` lists every label in every
sample, with floats in shortest round-trip notation.
"""
from __future__ import annotations

import csv
import io
import math
import re
from pathlib import Path

import numpy as np

from .errors import NonMonotonicTime, ParseError
from .rigidbody import MarkerStream

HEADER = ("time_s", "body", "label", "x_mm", "y_mm", "z_mm", "visible")
_TIME_RE = re.compile(r"^(\d+):(\d{1,2})[.:](\d+)$")


def _float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(line, column, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(line, column, f"not finite: {text!r}")
    return value


def parse_marker_stream(text: str) -> MarkerStream:
    """Parse CSV text into a :class:`MarkerStream`.

    Raises :class:`ParseError` with the 1-based line and column of the first
    malformed field, and :class:`NonMonotonicTime` on a time regression.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, None, "missing header") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise ParseError(1, None, f"header must be {','.join(HEADER)}")

    times: list[float] = []
    samples: list[dict[str, tuple[np.ndarray, bool]]] = []
    body_of: dict[str, str] = {}
    prev = None
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(HEADER):
            raise ParseError(line, None, f"expected {len(HEADER)} fields, got {len(row)}")
        t_s, body, label, xs, ys, zs, vis_s = (f.strip() for f in row)
        t = _float(t_s, line, "time_s")
        if prev is not None and t < prev:
            raise NonMonotonicTime(line, prev, t)
        if not body:
            raise ParseError(line, "body", "empty body id")
        if not label:
            raise ParseError(line, "label", "empty label")
        if vis_s not in ("0", "1"):
            raise ParseError(line, "visible", f"must be 0 or 1, got {vis_s!r}")
        visible = vis_s == "1"
        coords = (xs, ys, zs)
        if visible or any(coords):
            pos = np.array([_float(v, line, c) for v, c in zip(coords, HEADER[3:6])])
        else:
            pos = np.full(3, np.nan)
        if body_of.setdefault(label, body) != body:
            raise ParseError(line, "body", f"label {label} already belongs to body {body_of[label]}")
        if prev is None or t > prev:
            times.append(t)
            samples.append({})
        if label in samples[-1]:
            raise ParseError(line, "label", f"duplicate label {label} at t={t_s}")
        samples[-1][label] = (pos, visible)
        prev = t

    labels = tuple(body_of)
    positions = np.full((len(samples), len(labels), 3), np.nan)
    visible = np.zeros((len(samples), len(labels)), dtype=bool)
    col = {lab: j for j, lab in enumerate(labels)}
    for i, sample in enumerate(samples):
        for lab, (pos, vis) in sample.items():
            positions[i, col[lab]] = pos
            visible[i, col[lab]] = vis
    return MarkerStream(np.array(times), labels, tuple(body_of[k] for k in labels), positions, visible)


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def emit_marker_stream(stream: MarkerStream) -> str:
    """Canonical CSV text for ``stream``."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER)
    bodies = [b if b is not None else "" for b in stream.bodies]
    for t, pos, vis in zip(stream.times, stream.positions, stream.visible):
        ts = repr(float(t))
        for label, body, p, v in zip(stream.labels, bodies, pos, vis):
            writer.writerow((ts, body, label, _fmt(p[0]), _fmt(p[1]), _fmt(p[2]), "1" if v else "0"))
    return out.getvalue()


def read_marker_stream(path: str | Path) -> MarkerStream:
    return parse_marker_stream(Path(path).read_text("utf-8"))


def write_marker_stream(stream: MarkerStream, path: str | Path) -> None:
    Path(path).write_text(emit_marker_stream(stream), "utf-8")


def parse_clock_time(text: str) -> float:
    """Seconds from a ``MM:SS.mmm`` timestamp.

    ``MM:SS:mmm`` (a colon before the milliseconds) is accepted as the same
    thing, e.g. ``04:37:517`` -> 277.517.
    """
    m = _TIME_RE.match(text.strip())
    if not m:
        raise ValueError(f"not a MM:SS.mmm timestamp: {text!r}")
    minutes, seconds, frac = m.groups()
    if int(seconds) >= 60:
        raise ValueError(f"seconds out of range in {text!r}")
    return int(minutes) * 60 + int(seconds) + int(frac) / 10 ** len(frac)
