"""Segment tracking by endpoint perturbation, suppression, admin transfer.

Each pass scores five hypotheses per live segment: the current endpoint
pair plus one nudge of size ``delta_q`` per endpoint per sign. A nudge
slides along the lattice line the endpoint sits on, except near a block
corner where it switches to the axis closer to the segment's normal so
the segment can leave the corner instead of growing along the border.

Segments spanning several blocks are scored against the union of those
blocks' active events; a segment inside a single block is scored against
that block's active and inactive events, letting the inactive margin pull
it beyond the block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .detector import LatticeState, LineSegment, LineStatus
from .lattice import BlockCoord, LatticeGeometry
from .linefit import Candidate, DegenerateLineError, ScoreParams, fitting_score
from .scarf import ScarfStorage, Snapshot

_LINE_TOL = 1e-6


@dataclass(frozen=True)
class TrackParams:
    delta_q: float
    corner_radius: float
    suppress_radius: float
    d_max: float
    f_th: float

    def __post_init__(self) -> None:
        if self.delta_q <= 0:
            raise ValueError("delta_q must be positive")


@dataclass
class TrackStats:
    tracked: int = 0
    retired: int = 0
    transferred: int = 0


def _lattice_lines(coord: float, b: int, limit: int) -> list[float]:
    """Lattice line positions near ``coord``, including the sensor borders."""
    lines = {0.0, float(limit)}
    m = round(coord / b)
    for mm in (m - 1, m, m + 1):
        pos = mm * b
        if 0 <= pos <= limit:
            lines.add(float(pos))
    return sorted(lines)


def _nearest_line(coord: float, b: int, limit: int) -> float:
    return min(_lattice_lines(coord, b, limit), key=lambda p: abs(coord - p))


def snap_to_lattice(q: tuple[float, float], geometry: LatticeGeometry) -> tuple[float, float]:
    """Project a point onto the nearest lattice line (or sensor border)."""
    x, y = q
    gx = _nearest_line(x, geometry.b, geometry.sensor.width)
    gy = _nearest_line(y, geometry.b, geometry.sensor.height)
    if abs(x - gx) <= abs(y - gy):
        return (gx, y)
    return (x, gy)


def _perturb_axis(q: tuple[float, float], other: tuple[float, float],
                  geometry: LatticeGeometry, params: TrackParams) -> tuple[str, tuple[float, float]]:
    """Choose the perturbation axis for endpoint ``q`` (re-snapping if needed).

    Returns (axis, effective endpoint); axis is "x" or "y".
    """
    b = geometry.b
    w, h = geometry.sensor.width, geometry.sensor.height
    x, y = q
    cx = _nearest_line(x, b, w)
    cy = _nearest_line(y, b, h)
    if math.hypot(x - cx, y - cy) < params.corner_radius:
        # corner mode: axis closer to the segment normal; ties prefer x
        lx, ly = other[0] - x, other[1] - y
        return ("x" if abs(ly) >= abs(lx) else "y"), q
    on_vert = abs(x - cx) < _LINE_TOL
    on_horz = abs(y - cy) < _LINE_TOL
    if not on_vert and not on_horz:
        # left the lattice during corner mode; re-snap now that it is over
        q = snap_to_lattice(q, geometry)
        x, y = q
        on_vert = abs(x - _nearest_line(x, b, w)) < _LINE_TOL
        on_horz = abs(y - _nearest_line(y, b, h)) < _LINE_TOL
    if on_vert and not on_horz:
        return "y", q
    if on_horz and not on_vert:
        return "x", q
    # on both lines but outside corner_radius cannot happen for
    # corner_radius >= tolerance; fall back to the normal rule
    lx, ly = other[0] - x, other[1] - y
    return ("x" if abs(ly) >= abs(lx) else "y"), q


def hypotheses(q0: tuple[float, float], q1: tuple[float, float],
               geometry: LatticeGeometry, params: TrackParams) -> list[Candidate]:
    """The five tracking hypotheses, unperturbed state first."""
    axis0, q0 = _perturb_axis(q0, q1, geometry, params)
    axis1, q1 = _perturb_axis(q1, q0, geometry, params)
    d = params.delta_q
    step0 = (d, 0.0) if axis0 == "x" else (0.0, d)
    step1 = (d, 0.0) if axis1 == "x" else (0.0, d)
    return [
        Candidate(q0, q1),
        Candidate((q0[0] + step0[0], q0[1] + step0[1]), q1),
        Candidate((q0[0] - step0[0], q0[1] - step0[1]), q1),
        Candidate(q0, (q1[0] + step1[0], q1[1] + step1[1])),
        Candidate(q0, (q1[0] - step1[0], q1[1] - step1[1])),
    ]


def _score(snap: Snapshot, cand: Candidate, params: ScoreParams) -> float:
    if cand.length < 1e-9:
        return 0.0
    try:
        return fitting_score(snap.u, snap.v, snap.active, cand, params)
    except DegenerateLineError:
        return 0.0


def track_segment(seg: LineSegment, storage: ScarfStorage, state: LatticeState,
                  params: TrackParams) -> LineStatus:
    """Update one segment to its best hypothesis; returns the new status."""
    geometry = storage.geometry
    crossed = geometry.blocks_crossed(seg.q0, seg.q1)
    if len(crossed) > 1:
        snap = storage.snapshot(crossed, include_inactive=False)
    else:
        snap = storage.snapshot(crossed, include_inactive=True)
    score_params = ScoreParams(params.d_max, snap.capacity)

    cands = hypotheses(seg.q0, seg.q1, geometry, params)
    best, best_f = cands[0], _score(snap, cands[0], score_params)
    for cand in cands[1:]:
        f = _score(snap, cand, score_params)
        if f > best_f:
            best, best_f = cand, f

    seg.q0, seg.q1 = best.q0, best.q1
    seg.f = best_f
    w, h = geometry.sensor.width, geometry.sensor.height
    in_bounds = all(0 <= x <= w and 0 <= y <= h for x, y in (best.q0, best.q1))
    new_status = LineStatus.GOOD_TRACK if (best_f >= params.f_th and in_bounds) \
        else LineStatus.BAD_TRACK
    state.update_tracked(seg, new_status)
    return new_status


def update_suppression(seg: LineSegment, state: LatticeState,
                       params: TrackParams) -> None:
    """Suppress detection in neighbours the segment midpoint is close to."""
    geometry = state.geometry
    b = geometry.b
    mx, my = seg.midpoint
    ru, rv = seg.admin
    near = []
    if mx - ru * b < params.suppress_radius:
        near.append((ru - 1, rv))
    if (ru + 1) * b - mx < params.suppress_radius:
        near.append((ru + 1, rv))
    if my - rv * b < params.suppress_radius:
        near.append((ru, rv - 1))
    if (rv + 1) * b - my < params.suppress_radius:
        near.append((ru, rv + 1))
    for nu, nv in near:
        if 0 <= nu < geometry.nx and 0 <= nv < geometry.ny:
            state.suppress(BlockCoord(nu, nv))


def _rect_distance(point: tuple[float, float],
                   rect: tuple[float, float, float, float]) -> float:
    x0, y0, x1, y1 = rect
    dx = max(x0 - point[0], 0.0, point[0] - x1)
    dy = max(y0 - point[1], 0.0, point[1] - y1)
    return math.hypot(dx, dy)


def release_suppressions(state: LatticeState, params: TrackParams) -> None:
    """Reopen suppressed blocks no live midpoint is close to anymore."""
    midpoints = [s.midpoint for s in state.live_segments()]
    for block in state.prohibited_blocks():
        rect = state.geometry.block_rect(block)
        if not any(_rect_distance(m, rect) < params.suppress_radius for m in midpoints):
            state.release(block)


def transfer_admin(seg: LineSegment, state: LatticeState) -> bool:
    """Move ownership to the midpoint's block; False forces BadTrack."""
    geometry = state.geometry
    mx, my = seg.midpoint
    if not (0 <= mx <= geometry.sensor.width and 0 <= my <= geometry.sensor.height):
        return False
    new_block = geometry.clamp_block_of(mx, my)
    if new_block == seg.admin:
        return True
    return state.transfer_segment(seg, new_block)


def tracking_pass(storage: ScarfStorage, state: LatticeState, params: TrackParams,
                  t_us: int = 0) -> tuple[list[LineSegment], TrackStats]:
    """Track every live segment once; returns per-segment outcomes and stats.

    Order is row-major by admin block. BadTrack segments are retired and
    their block reopened; successful ones may transfer admin and refresh
    suppressions. Returns the segments in processing order (their status
    reflects this pass).
    """
    stats = TrackStats()
    outcomes: list[LineSegment] = []
    for seg in state.live_segments():
        status = track_segment(seg, storage, state, params)
        stats.tracked += 1
        if status is LineStatus.BAD_TRACK:
            state.retire_segment(seg, t_us)
            stats.retired += 1
        else:
            old_admin = seg.admin
            if not transfer_admin(seg, state):
                state.update_tracked(seg, LineStatus.BAD_TRACK)
                state.retire_segment(seg, t_us)
                stats.retired += 1
                outcomes.append(seg)
                continue
            if seg.admin != old_admin:
                stats.transferred += 1
            update_suppression(seg, state, params)
        outcomes.append(seg)
    release_suppressions(state, params)
    state.verify_admin_uniqueness()
    return outcomes, stats
