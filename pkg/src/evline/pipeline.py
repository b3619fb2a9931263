"""Pipeline orchestration: ingestion, detection, and tracking roles.

Two run modes share the same per-pass machinery:

* ``lockstep`` — single-threaded deterministic schedule (ingest a fixed
  number of events, one detection pass, one tracking pass, repeat), used
  for every correctness test; identical inputs give identical traces.
* ``threaded`` — one event-driven ingestion thread plus free-running
  detection and tracking loops, used for performance measurement. Set the
  ``EVLINE_THREADS`` environment variable to 1 to merge the two
  process-driven loops into a single alternating thread.

Rates are reported over a steady-state window: wall-clock seconds from run
start in threaded mode, stream seconds in lockstep mode (where wall time
is meaningless for the trace).
"""

from __future__ import annotations

import math
import os
import threading
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .detector import DetectParams, LatticeState, LineStatus, detection_pass
from .events import EventArray, SensorGeometry
from .lattice import LatticeGeometry
from .scarf import ScarfStorage
from .trace import TraceRow
from .tracker import TrackParams, tracking_pass

# (width, height) -> (block size, perturbation step)
RESOLUTION_DEFAULTS = {
    (240, 180): (8, 0.8),
    (346, 260): (10, 1.1),
    (640, 480): (14, 2.5),
}


@dataclass
class PipelineConfig:
    width: int = 240
    height: int = 180
    b: int | None = None
    alpha: float = 1.0
    f_th: float = 0.2
    delta_q: float | None = None
    d_max: float | None = None
    suppress_radius: float | None = None
    corner_radius: float | None = None
    min_events: int | None = None
    mode: str = "lockstep"                  # lockstep | threaded
    playback: str = "fast"                  # fast | paced
    pace_speed: float = 1.0
    events_per_step: int = 64               # lockstep ingestion quantum
    chunk_size: int = 32768                 # threaded ingestion quantum
    window_start_s: float | None = None
    window_end_s: float | None = None
    intensity: int = 64
    strict_state: bool = False

    def __post_init__(self) -> None:
        if self.b is None or self.delta_q is None:
            b_default, dq_default = RESOLUTION_DEFAULTS.get(
                (self.width, self.height), (8, 0.8))
            if self.b is None:
                self.b = b_default
            if self.delta_q is None:
                self.delta_q = dq_default
        if self.d_max is None:
            self.d_max = 0.2 * self.b
        if self.suppress_radius is None:
            self.suppress_radius = self.b / 4
        if self.corner_radius is None:
            self.corner_radius = self.delta_q
        if self.min_events is None:
            n = round(self.alpha * self.b * self.b)
            self.min_events = max(4, math.ceil(0.1 * n))
        if self.mode not in ("lockstep", "threaded"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.playback not in ("fast", "paced"):
            raise ValueError(f"unknown playback {self.playback!r}")

    @property
    def sensor(self) -> SensorGeometry:
        return SensorGeometry(self.width, self.height)

    def geometry(self) -> LatticeGeometry:
        return LatticeGeometry(self.sensor, self.b)

    def detect_params(self) -> DetectParams:
        return DetectParams(d_max=self.d_max, f_th=self.f_th,
                            min_events=self.min_events)

    def track_params(self) -> TrackParams:
        return TrackParams(delta_q=self.delta_q, corner_radius=self.corner_radius,
                           suppress_radius=self.suppress_radius,
                           d_max=self.d_max, f_th=self.f_th)

    @staticmethod
    def from_file(path: str | Path, **overrides) -> "PipelineConfig":
        values = parse_config_file(path)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig(**values)


_CONFIG_TYPES = {f.name: f.type for f in fields(PipelineConfig)}
_INT_KEYS = {"width", "height", "b", "min_events", "events_per_step",
             "chunk_size", "intensity"}
_FLOAT_KEYS = {"alpha", "f_th", "delta_q", "d_max", "suppress_radius",
               "corner_radius", "pace_speed", "window_start_s", "window_end_s"}
_STR_KEYS = {"mode", "playback"}
_BOOL_KEYS = {"strict_state"}


def parse_config_file(path: str | Path) -> dict:
    """Parse a key=value config file (``#`` starts a comment)."""
    values: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key in _STR_KEYS:
                values[key] = val
            elif key in _BOOL_KEYS:
                values[key] = val.lower() in ("1", "true", "yes")
            else:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    return values


@dataclass
class PipelineMetrics:
    scarf_event_rate: float = 0.0           # events consumed per wall second
    detection_freq: float = 0.0             # completed passes per wall second
    tracking_freq: float = 0.0
    events_consumed: int = 0
    events_dropped: int = 0
    wall_duration_s: float = 0.0
    window: tuple[float, float] = (0.0, 0.0)
    live_counts: list[tuple[int, int]] = field(default_factory=list)
    lifetimes_s: list[float] = field(default_factory=list)
    segments_created: int = 0

    def summary(self) -> str:
        lines = [
            f"scarf_event_rate_mev_s={self.scarf_event_rate / 1e6:.3f}",
            f"detection_freq_hz={self.detection_freq:.1f}",
            f"tracking_freq_hz={self.tracking_freq:.1f}",
            f"events_consumed={self.events_consumed}",
            f"events_dropped={self.events_dropped}",
            f"wall_duration_s={self.wall_duration_s:.3f}",
            f"window_start_s={self.window[0]:.3f}",
            f"window_end_s={self.window[1]:.3f}",
            f"segments_created={self.segments_created}",
        ]
        return "\n".join(lines)


@dataclass
class PipelineRun:
    """A constructed pipeline: storage plus per-block line state."""

    config: PipelineConfig
    storage: ScarfStorage
    state: LatticeState

    @staticmethod
    def create(config: PipelineConfig) -> "PipelineRun":
        geometry = config.geometry()
        storage = ScarfStorage(geometry, alpha=config.alpha,
                               intensity=config.intensity)
        state = LatticeState(geometry, strict=config.strict_state)
        return PipelineRun(config, storage, state)


def _windowed_rate(times: list[float], w0: float, w1: float) -> float:
    """Events per second for completion times within [w0, w1]."""
    if w1 <= w0:
        return 0.0
    n = sum(1 for t in times if w0 <= t <= w1)
    return n / (w1 - w0)


def run_lockstep(events: EventArray, config: PipelineConfig,
                 events_per_step: int | None = None
                 ) -> tuple[list[TraceRow], PipelineMetrics]:
    """Deterministic single-threaded schedule: ingest, detect, track, repeat."""
    per_step = events_per_step or config.events_per_step
    if per_step < 1:
        raise ValueError("events_per_step must be >= 1")
    run = PipelineRun.create(config)
    storage, state = run.storage, run.state
    dparams, tparams = config.detect_params(), config.track_params()

    warmup_us = (config.window_start_s or 0.0) * 1e6
    trace: list[TraceRow] = []
    metrics = PipelineMetrics()
    t_now = 0
    wall0 = time.perf_counter()
    det_passes = 0
    trk_passes = 0

    for start in range(0, len(events), per_step):
        chunk = events[start:start + per_step]
        storage.insert_batch(chunk.u, chunk.v)
        t_now = int(chunk.t[-1])
        in_warmup = t_now < warmup_us

        created = detection_pass(storage, state, dparams, t_now)
        det_passes += 1
        for seg in created:
            trace.append(TraceRow.from_segment(t_now, seg))
            trace[-1].warmup = in_warmup
        metrics.segments_created += len(created)

        outcomes, _ = tracking_pass(storage, state, tparams, t_now)
        trk_passes += 1
        for seg in outcomes:
            trace.append(TraceRow.from_segment(t_now, seg))
            trace[-1].warmup = in_warmup
        metrics.live_counts.append((t_now, len(state.live_segments())))

    wall = time.perf_counter() - wall0
    metrics.events_consumed = len(events)
    metrics.events_dropped = storage.dropped_events
    metrics.wall_duration_s = wall
    metrics.scarf_event_rate = len(events) / wall if wall > 0 else 0.0
    metrics.detection_freq = det_passes / wall if wall > 0 else 0.0
    metrics.tracking_freq = trk_passes / wall if wall > 0 else 0.0
    metrics.window = (0.0, wall)
    metrics.lifetimes_s = _collect_lifetimes(state, t_now)
    return trace, metrics


def _collect_lifetimes(state: LatticeState, run_end_us: int) -> list[float]:
    seen: dict[int, float] = {}
    for seg in state.all_segments():
        death = seg.death_t_us if seg.death_t_us is not None else run_end_us
        seen[seg.l_id] = (death - seg.birth_t_us) / 1e6
    return [seen[k] for k in sorted(seen)]


def run_threaded(events: EventArray, config: PipelineConfig,
                 repeat: int = 1, max_wall_s: float | None = None
                 ) -> tuple[list[TraceRow], PipelineMetrics]:
    """Concurrent run: ingestion thread plus free-running process loops.

    ``repeat`` replays the stream that many times (timestamps shifted by
    the stream span per lap) so short recordings can sustain load long
    enough to measure a steady-state window; ``max_wall_s`` stops lap
    replay early once the wall clock passes it.
    """
    run = PipelineRun.create(config)
    storage, state = run.storage, run.state
    dparams, tparams = config.detect_params(), config.track_params()

    trace: list[TraceRow] = []
    trace_lock = threading.Lock()
    stop = threading.Event()
    stream_t_us = [0]
    consumed = [0]
    ingest_times: list[tuple[float, int]] = []   # (wall completion, n events)
    det_times: list[float] = []
    trk_times: list[float] = []
    live_counts: list[tuple[int, int]] = []
    segments_created = [0]

    span_us = int(events.t[-1]) + 1 if len(events) else 0
    wall0 = time.perf_counter()

    def ingest() -> None:
        for lap in range(max(repeat, 1)):
            if max_wall_s is not None and lap > 0 \
                    and time.perf_counter() - wall0 > max_wall_s:
                break
            offset = lap * span_us
            for start in range(0, len(events), config.chunk_size):
                chunk = events[start:start + config.chunk_size]
                if config.playback == "paced" and len(chunk):
                    due = wall0 + (offset + int(chunk.t[-1])) / 1e6 / config.pace_speed
                    delay = due - time.perf_counter()
                    if delay > 0:
                        time.sleep(delay)
                storage.insert_batch(chunk.u, chunk.v)
                consumed[0] += len(chunk)
                if len(chunk):
                    stream_t_us[0] = offset + int(chunk.t[-1])
                ingest_times.append((time.perf_counter() - wall0, len(chunk)))
        stop.set()

    def detection_loop() -> None:
        while not stop.is_set():
            t_now = stream_t_us[0]
            created = detection_pass(storage, state, dparams, t_now)
            det_times.append(time.perf_counter() - wall0)
            if created:
                with trace_lock:
                    trace.extend(TraceRow.from_segment(t_now, s) for s in created)
                segments_created[0] += len(created)

    def tracking_loop() -> None:
        while not stop.is_set():
            t_now = stream_t_us[0]
            outcomes, _ = tracking_pass(storage, state, tparams, t_now)
            trk_times.append(time.perf_counter() - wall0)
            if outcomes:
                with trace_lock:
                    trace.extend(TraceRow.from_segment(t_now, s) for s in outcomes)
            live_counts.append((t_now, len(state.live_segments())))

    def combined_loop() -> None:
        while not stop.is_set():
            t_now = stream_t_us[0]
            created = detection_pass(storage, state, dparams, t_now)
            det_times.append(time.perf_counter() - wall0)
            outcomes, _ = tracking_pass(storage, state, tparams, t_now)
            trk_times.append(time.perf_counter() - wall0)
            with trace_lock:
                trace.extend(TraceRow.from_segment(t_now, s) for s in created)
                trace.extend(TraceRow.from_segment(t_now, s) for s in outcomes)
            segments_created[0] += len(created)
            live_counts.append((t_now, len(state.live_segments())))

    n_loop_threads = int(os.environ.get("EVLINE_THREADS", "2"))
    if n_loop_threads <= 1:
        workers = [threading.Thread(target=combined_loop, name="evline-process")]
    else:
        workers = [threading.Thread(target=detection_loop, name="evline-detect"),
                   threading.Thread(target=tracking_loop, name="evline-track")]
    ingest_thread = threading.Thread(target=ingest, name="evline-scarf")

    for t in workers:
        t.start()
    ingest_thread.start()
    ingest_thread.join()
    for t in workers:
        t.join()
    wall = time.perf_counter() - wall0

    w0 = config.window_start_s if config.window_start_s is not None \
        else min(1.0, 0.25 * wall)
    w1 = config.window_end_s if config.window_end_s is not None else wall
    w1 = min(w1, wall)

    metrics = PipelineMetrics()
    metrics.events_consumed = consumed[0]
    metrics.events_dropped = storage.dropped_events
    metrics.wall_duration_s = wall
    metrics.window = (w0, w1)
    span = max(w1 - w0, 1e-9)
    metrics.scarf_event_rate = sum(n for t, n in ingest_times if w0 <= t <= w1) / span
    metrics.detection_freq = _windowed_rate(det_times, w0, w1)
    metrics.tracking_freq = _windowed_rate(trk_times, w0, w1)
    metrics.live_counts = live_counts
    metrics.segments_created = segments_created[0]
    metrics.lifetimes_s = _collect_lifetimes(state, stream_t_us[0])

    warmup_us = w0 * 1e6 if config.playback == "paced" else 0.0
    for row in trace:
        row.warmup = row.t_us < warmup_us
    trace.sort(key=lambda r: (r.t_us, r.l_id))
    return trace, metrics


def run_pipeline(events: EventArray, config: PipelineConfig,
                 **kwargs) -> tuple[list[TraceRow], PipelineMetrics]:
    if config.mode == "threaded":
        return run_threaded(events, config, **kwargs)
    return run_lockstep(events, config, **kwargs)
