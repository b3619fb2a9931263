"""Synthetic scenes shared by pipeline, CLI, and acceptance tests."""

from __future__ import annotations

import numpy as np

from evline.events import EventArray, SceneSpec, SegmentSpec, generate_scene


def tracking_scene_spec(noise_fraction: float = 0.01, seed: int = 0,
                        duration_s: float = 10.0) -> SceneSpec:
    """A 64 px vertical segment translating at 50 px/s across 240x180.

    The segment bounces between x=30 and x=210; ``noise_fraction`` sets the
    background rate relative to the segment's own event rate.
    """
    duration_us = int(duration_s * 1e6)
    knots = []
    t, x, direction = 0.0, 30.0, 1.0
    while t < duration_us:
        knots.append((t, x, 56.0, x, 120.0))
        span = (210.0 - x) if direction > 0 else (x - 30.0)
        dt = span / 50e-6  # 50 px/s in px/us
        if t + dt > duration_us:
            x += direction * (duration_us - t) * 50e-6
            t = duration_us
        else:
            x = 210.0 if direction > 0 else 30.0
            t += dt
        knots.append((t, x, 56.0, x, 120.0))
        direction = -direction
    signal_rate = 50.0 * 64.0  # px/s * rows = events/s
    return SceneSpec(width=240, height=180, duration_us=duration_us,
                     segments=[SegmentSpec(knots)],
                     noise_rate_hz=noise_fraction * signal_rate,
                     seed=seed)


def fast_sweep_stream(n_lines: int = 5, rate_mev_s: float = 2.0,
                      duration_s: float = 5.0, seed: int = 0) -> EventArray:
    """Dense 240x180 stream from fast-sweeping vertical lines.

    Line speed is chosen so the nominal event rate of the stream matches
    ``rate_mev_s``; used for throughput benchmarking.
    """
    height_px = 160.0
    speed = rate_mev_s * 1e6 / (n_lines * height_px)  # px/s per line
    duration_us = int(duration_s * 1e6)
    segments = []
    rng = np.random.default_rng(seed)
    for k in range(n_lines):
        x = float(rng.uniform(20, 220))
        direction = 1.0 if rng.random() < 0.5 else -1.0
        knots = []
        t = 0.0
        while t < duration_us:
            knots.append((t, x, 10.0, x, 10.0 + height_px))
            span = (230.0 - x) if direction > 0 else (x - 10.0)
            dt = span / (speed * 1e-6)
            if t + dt > duration_us:
                x += direction * (duration_us - t) * speed * 1e-6
                t = duration_us
            else:
                x = 230.0 if direction > 0 else 10.0
                t += dt
            knots.append((t, x, 10.0, x, 10.0 + height_px))
            direction = -direction
        segments.append(SegmentSpec(knots))
    spec = SceneSpec(width=240, height=180, duration_us=duration_us,
                     segments=segments, seed=seed)
    events, _ = generate_scene(spec)
    return events
