"""Segment trace records and their CSV round-trip.

One row per segment state change and per tracking-pass confirmation:
``t_us,l_id,status,ru,rv,x0,y0,x1,y1,f``. Rows produced during the
warm-up window carry an in-memory flag that is not serialized.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .detector import LineSegment

TRACE_HEADER = ["t_us", "l_id", "status", "ru", "rv", "x0", "y0", "x1", "y1", "f"]


@dataclass
class TraceRow:
    t_us: int
    l_id: int
    status: str
    ru: int
    rv: int
    x0: float
    y0: float
    x1: float
    y1: float
    f: float
    warmup: bool = field(default=False, compare=False)

    @staticmethod
    def from_segment(t_us: int, seg: LineSegment) -> "TraceRow":
        return TraceRow(t_us, seg.l_id, seg.status.value, seg.admin.ru, seg.admin.rv,
                        seg.q0[0], seg.q0[1], seg.q1[0], seg.q1[1], seg.f)


def write_trace(rows: list[TraceRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in rows:
            writer.writerow([r.t_us, r.l_id, r.status, r.ru, r.rv,
                             repr(r.x0), repr(r.y0), repr(r.x1), repr(r.y1), repr(r.f)])


def read_trace(path: str | Path) -> list[TraceRow]:
    out: list[TraceRow] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != TRACE_HEADER:
            raise ValueError(f"bad trace header: {header}")
        for row in reader:
            if not row:
                continue
            out.append(TraceRow(int(row[0]), int(row[1]), row[2], int(row[3]),
                                int(row[4]), float(row[5]), float(row[6]),
                                float(row[7]), float(row[8]), float(row[9])))
    return out
