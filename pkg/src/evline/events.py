"""Event data model, stream file I/O, and a synthetic scene generator.

Two stream formats are supported, both bit-exact:

* CSV with header ``t_us,u,v,p``, one event per line, polarity 1 / -1.
* Packed little-endian binary records ``u:uint16, v:uint16, t:uint64,
  p:int8`` (13 bytes each, no header), meant for benchmark-scale streams.

Ground truth segments travel as CSV ``t_us,id,x0,y0,x1,y1``.

The generator emits one event per pixel crossing of each moving segment
(an idealised contrast camera with no refractory period) plus uniform
background noise, so detector output can be scored against exact ground
truth.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

BINARY_DTYPE = np.dtype([("u", "<u2"), ("v", "<u2"), ("t", "<u8"), ("p", "<i1")])
CSV_HEADER = ["t_us", "u", "v", "p"]
GT_HEADER = ["t_us", "id", "x0", "y0", "x1", "y1"]


class EventParseError(ValueError):
    """Malformed record; ``record`` is the offending 0-based index."""

    def __init__(self, message: str, record: int):
        super().__init__(f"record {record}: {message}")
        self.record = record


class EventOrderError(ValueError):
    """Timestamps not monotone non-decreasing."""


class SceneSpecError(ValueError):
    """Invalid synthetic scene specification."""


@dataclass(frozen=True)
class Event:
    t: int      # microseconds
    u: int
    v: int
    p: int      # +1 or -1


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"sensor must be positive, got {self.width}x{self.height}")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class GroundTruthSegment:
    t: int
    id: int
    x0: float
    y0: float
    x1: float
    y1: float


@dataclass
class EventArray:
    """Column-oriented event batch; the bulk counterpart of ``Event``."""

    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=np.uint64)
        self.u = np.asarray(self.u, dtype=np.uint16)
        self.v = np.asarray(self.v, dtype=np.uint16)
        self.p = np.asarray(self.p, dtype=np.int8)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self.t)):
            yield Event(int(self.t[i]), int(self.u[i]), int(self.v[i]), int(self.p[i]))

    def __getitem__(self, s: slice) -> "EventArray":
        return EventArray(self.t[s], self.u[s], self.v[s], self.p[s])

    @staticmethod
    def from_events(events: Iterable[Event]) -> "EventArray":
        ev = list(events)
        return EventArray(
            np.array([e.t for e in ev], np.uint64),
            np.array([e.u for e in ev], np.uint16),
            np.array([e.v for e in ev], np.uint16),
            np.array([e.p for e in ev], np.int8),
        )

    @staticmethod
    def empty() -> "EventArray":
        return EventArray(np.empty(0, np.uint64), np.empty(0, np.uint16),
                          np.empty(0, np.uint16), np.empty(0, np.int8))


def _validate_polarity(p: int, record: int) -> None:
    if p not in (1, -1):
        raise EventParseError(f"polarity out of range: {p}", record)


def read_events(path: str | Path, fmt: str = "csv") -> Iterator[Event]:
    """Yield events from a stream file, validating format and ordering."""
    arr = read_event_array(path, fmt)
    return iter(arr)


def read_event_array(path: str | Path, fmt: str = "csv") -> EventArray:
    """Bulk read of a stream file into column arrays."""
    path = Path(path)
    if fmt == "csv":
        arr = _read_csv(path)
    elif fmt == "binary":
        raw = np.fromfile(path, dtype=BINARY_DTYPE)
        arr = EventArray(raw["t"], raw["u"], raw["v"], raw["p"])
        bad = np.flatnonzero((arr.p != 1) & (arr.p != -1))
        if bad.size:
            raise EventParseError(f"polarity out of range: {arr.p[bad[0]]}", int(bad[0]))
    else:
        raise ValueError(f"unknown stream format: {fmt!r}")
    if len(arr) > 1 and np.any(np.diff(arr.t.astype(np.int64)) < 0):
        idx = int(np.flatnonzero(np.diff(arr.t.astype(np.int64)) < 0)[0]) + 1
        raise EventOrderError(f"timestamp decreases at record {idx}")
    return arr


def _read_csv(path: Path) -> EventArray:
    ts, us, vs, ps = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != CSV_HEADER:
            raise EventParseError(f"bad CSV header: {header}", 0)
        for i, row in enumerate(reader):
            if not row:
                continue
            try:
                t, u, v, p = (int(x) for x in row)
            except (ValueError, TypeError) as exc:
                raise EventParseError(str(exc), i) from exc
            if t < 0 or u < 0 or v < 0:
                raise EventParseError(f"negative field in {row}", i)
            _validate_polarity(p, i)
            ts.append(t); us.append(u); vs.append(v); ps.append(p)
    return EventArray(np.array(ts, np.uint64), np.array(us, np.uint16),
                      np.array(vs, np.uint16), np.array(ps, np.int8))


def write_events(events: EventArray | Iterable[Event], path: str | Path,
                 fmt: str = "csv") -> None:
    """Write a stream file; round-trips bit-exactly through read_event_array."""
    if not isinstance(events, EventArray):
        events = EventArray.from_events(events)
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for i in range(len(events)):
                writer.writerow([int(events.t[i]), int(events.u[i]),
                                 int(events.v[i]), int(events.p[i])])
    elif fmt == "binary":
        raw = np.empty(len(events), dtype=BINARY_DTYPE)
        raw["u"], raw["v"], raw["t"], raw["p"] = events.u, events.v, events.t, events.p
        raw.tofile(path)
    else:
        raise ValueError(f"unknown stream format: {fmt!r}")


def read_ground_truth(path: str | Path) -> list[GroundTruthSegment]:
    out: list[GroundTruthSegment] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != GT_HEADER:
            raise EventParseError(f"bad GT header: {header}", 0)
        for i, row in enumerate(reader):
            if not row:
                continue
            try:
                out.append(GroundTruthSegment(int(row[0]), int(row[1]),
                                              *(float(x) for x in row[2:6])))
            except (ValueError, IndexError) as exc:
                raise EventParseError(str(exc), i) from exc
    return out


def write_ground_truth(segments: Iterable[GroundTruthSegment], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GT_HEADER)
        for g in segments:
            writer.writerow([g.t, g.id, g.x0, g.y0, g.x1, g.y1])


# ---------------------------------------------------------------------------
# synthetic scene generation
# ---------------------------------------------------------------------------

@dataclass
class SegmentSpec:
    """A moving segment given as piecewise-linear endpoint keyframes.

    ``keyframes`` rows are (t_us, x0, y0, x1, y1); positions are held
    constant before the first and after the last keyframe.
    """

    keyframes: list[tuple[float, float, float, float, float]]

    def __post_init__(self) -> None:
        if not self.keyframes:
            raise SceneSpecError("segment needs at least one keyframe")
        ts = [k[0] for k in self.keyframes]
        if sorted(ts) != ts:
            raise SceneSpecError("keyframes must be time-ordered")
        for k in self.keyframes:
            if math.hypot(k[3] - k[1], k[4] - k[2]) <= 0:
                raise SceneSpecError(f"zero-length segment at t={k[0]}")
        self._times = ts

    def at(self, t_us: float) -> tuple[float, float, float, float]:
        kf = self.keyframes
        if t_us <= kf[0][0]:
            return tuple(kf[0][1:])
        if t_us >= kf[-1][0]:
            return tuple(kf[-1][1:])
        i = bisect.bisect_right(self._times, t_us) - 1
        ta, *pa = kf[i]
        tb, *pb = kf[i + 1]
        w = 0.0 if tb == ta else (t_us - ta) / (tb - ta)
        return tuple(a + w * (b - a) for a, b in zip(pa, pb))  # type: ignore[return-value]

    def max_speed(self) -> float:
        """Upper bound on endpoint speed, px per microsecond."""
        best = 0.0
        for (ta, *pa), (tb, *pb) in zip(self.keyframes[:-1], self.keyframes[1:]):
            if tb <= ta:
                continue
            d = max(math.hypot(pb[0] - pa[0], pb[1] - pa[1]),
                    math.hypot(pb[2] - pa[2], pb[3] - pa[3]))
            best = max(best, d / (tb - ta))
        return best


@dataclass
class SceneSpec:
    width: int
    height: int
    duration_us: int
    segments: list[SegmentSpec] = field(default_factory=list)
    noise_rate_hz: float = 0.0
    events_per_crossing: int = 1
    gt_period_us: int = 1000
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.duration_us <= 0:
            raise SceneSpecError("duration must be positive")
        if self.noise_rate_hz < 0:
            raise SceneSpecError("noise rate must be non-negative")
        if self.events_per_crossing < 1:
            raise SceneSpecError("events_per_crossing must be >= 1")

    @property
    def sensor(self) -> SensorGeometry:
        return SensorGeometry(self.width, self.height)

    @staticmethod
    def from_json(path: str | Path) -> "SceneSpec":
        with open(path) as fh:
            data = json.load(fh)
        try:
            segs = [SegmentSpec([tuple(k) for k in s["keyframes"]])
                    for s in data.get("segments", [])]
            return SceneSpec(
                width=int(data["width"]),
                height=int(data["height"]),
                duration_us=int(data["duration_us"]),
                segments=segs,
                noise_rate_hz=float(data.get("noise_rate_hz", 0.0)),
                events_per_crossing=int(data.get("events_per_crossing", 1)),
                gt_period_us=int(data.get("gt_period_us", 1000)),
                seed=data.get("seed"),
            )
        except (KeyError, TypeError) as exc:
            raise SceneSpecError(f"bad scene spec: {exc}") from exc


def _raster_codes(x0: float, y0: float, x1: float, y1: float,
                  width: int, height: int) -> np.ndarray:
    """Nearest-pixel footprint of a segment as sorted v*width+u codes."""
    n = max(int(math.ceil(max(abs(x1 - x0), abs(y1 - y0)))), 1) + 1
    frac = np.arange(n) * (1.0 / (n - 1)) if n > 1 else np.zeros(1)
    px = np.floor(x0 + frac * (x1 - x0) + 0.5).astype(np.int64)
    py = np.floor(y0 + frac * (y1 - y0) + 0.5).astype(np.int64)
    ok = (px >= 0) & (px < width) & (py >= 0) & (py < height)
    return np.unique(py[ok] * width + px[ok])


def _sorted_diff(cur: np.ndarray, prev: np.ndarray) -> np.ndarray:
    """Elements of sorted-unique ``cur`` absent from sorted-unique ``prev``."""
    if len(prev) == 0 or len(cur) == 0:
        return cur
    idx = np.searchsorted(prev, cur)
    idx[idx == len(prev)] = len(prev) - 1
    return cur[prev[idx] != cur]


def generate_scene(spec: SceneSpec) -> tuple[EventArray, list[GroundTruthSegment]]:
    """Synthesize an event stream plus exact ground truth for a scene.

    Each moving segment emits ``events_per_crossing`` events whenever its
    rasterised footprint newly covers a pixel (no events for the initial
    footprint at t=0). Polarity follows the dominant axis of the segment's
    instantaneous velocity. Background noise is a uniform Poisson process.
    Output timestamps are globally non-decreasing.
    """
    sensor = spec.sensor
    rng = np.random.default_rng(spec.seed)
    ts: list[np.ndarray] = []
    codes: list[np.ndarray] = []
    ps: list[np.ndarray] = []
    epc = spec.events_per_crossing

    for seg in spec.segments:
        speed = seg.max_speed()  # px/us
        # fine enough that an edge advances < 0.5 px between samples
        if speed > 0:
            step = max(int(0.5 / speed), 1)
        else:
            step = spec.duration_us
        prev = _raster_codes(*seg.at(0.0), sensor.width, sensor.height)
        prev_pos = seg.at(0.0)
        t = step
        while t <= spec.duration_us:
            pos = seg.at(float(t))
            cur = _raster_codes(*pos, sensor.width, sensor.height)
            fresh = _sorted_diff(cur, prev)
            if len(fresh):
                vx = (pos[0] + pos[2] - prev_pos[0] - prev_pos[2]) * 0.5
                vy = (pos[1] + pos[3] - prev_pos[1] - prev_pos[3]) * 0.5
                pol = 1 if (vx if abs(vx) >= abs(vy) else vy) >= 0 else -1
                codes.append(np.repeat(fresh, epc))
                ts.append(np.full(len(fresh) * epc, t, np.int64))
                ps.append(np.full(len(fresh) * epc, pol, np.int8))
            prev, prev_pos = cur, pos
            if t == spec.duration_us:
                break
            t = min(t + step, spec.duration_us)

    if spec.noise_rate_hz > 0:
        n_noise = int(rng.poisson(spec.noise_rate_hz * spec.duration_us * 1e-6))
        if n_noise:
            nt = rng.integers(0, spec.duration_us, n_noise, dtype=np.int64)
            nu = rng.integers(0, sensor.width, n_noise, dtype=np.int64)
            nv = rng.integers(0, sensor.height, n_noise, dtype=np.int64)
            ts.append(nt)
            codes.append(nv * sensor.width + nu)
            ps.append(rng.choice(np.array([-1, 1], np.int8), n_noise))

    if ts:
        t_arr = np.concatenate(ts)
        code_arr = np.concatenate(codes)
        p_arr = np.concatenate(ps)
    else:
        t_arr = np.empty(0, np.int64)
        code_arr = np.empty(0, np.int64)
        p_arr = np.empty(0, np.int8)
    order = np.argsort(t_arr, kind="stable")
    events = EventArray(t_arr[order].astype(np.uint64),
                        (code_arr[order] % sensor.width).astype(np.uint16),
                        (code_arr[order] // sensor.width).astype(np.uint16),
                        p_arr[order])

    gt: list[GroundTruthSegment] = []
    for sid, seg in enumerate(spec.segments):
        for t in range(0, spec.duration_us + 1, spec.gt_period_us):
            x0, y0, x1, y1 = seg.at(float(t))
            gt.append(GroundTruthSegment(
                t, sid,
                min(max(x0, 0.0), float(sensor.width)),
                min(max(y0, 0.0), float(sensor.height)),
                min(max(x1, 0.0), float(sensor.width)),
                min(max(y1, 0.0), float(sensor.height)),
            ))
    gt.sort(key=lambda g: (g.t, g.id))
    return events, gt
