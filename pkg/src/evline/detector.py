"""Line-segment initialization inside blocks, plus per-block segment state.

Detection runs only in blocks whose status is NoDetect: it fits a
total-least-squares line to the block's active events, clips it to the
block's active region, and accepts the chord as a new segment when its
fitting score strictly exceeds the threshold.

``LatticeState`` owns the per-block status array and the live segment
registry shared by the detection and tracking loops, and records every
status transition so illegal ones can be asserted on.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .lattice import BlockCoord, LatticeGeometry
from .linefit import (Candidate, DegenerateLineError, ScoreParams,
                      clip_to_rect, fit_line, fitting_score)
from .scarf import ScarfStorage

_PREFILTER_MARGIN = 1e-3  # advisory scan may only be more permissive than fit_line


class LineStatus(str, Enum):
    NO_DETECT = "NoDetect"
    DETECTED = "Detected"
    PROHIBIT_DETECTION = "ProhibitDetection"
    BAD_TRACK = "BadTrack"
    GOOD_TRACK = "GoodTrack"


LIVE_STATUSES = (LineStatus.DETECTED, LineStatus.GOOD_TRACK)


@dataclass
class LineSegment:
    q0: tuple[float, float]
    q1: tuple[float, float]
    f: float
    status: LineStatus
    admin: BlockCoord
    l_id: int
    birth_t_us: int
    death_t_us: int | None = None

    @property
    def midpoint(self) -> tuple[float, float]:
        return (0.5 * (self.q0[0] + self.q1[0]), 0.5 * (self.q0[1] + self.q1[1]))

    def candidate(self) -> Candidate:
        return Candidate(self.q0, self.q1)


@dataclass(frozen=True)
class DetectParams:
    d_max: float
    f_th: float
    min_events: int


class LatticeState:
    """Per-block line status plus the live-segment registry.

    All mutations funnel through methods that validate the status
    transition relation; offending transitions are appended to
    ``violations`` (and raised when ``strict``).
    """

    def __init__(self, geometry: LatticeGeometry, strict: bool = False):
        self.geometry = geometry
        self.strict = strict
        self._status = np.full(geometry.n_blocks, 0, np.int8)
        self._codes = list(LineStatus)
        self._segments: dict[int, LineSegment] = {}
        self._all: list[LineSegment] = []
        self._next_id = 0
        self.violations: list[str] = []
        self.lock = threading.RLock()
        # push counter at the last failed detection attempt per block; a
        # block whose buffer has not changed since then cannot newly detect
        self._detect_seen = np.full(geometry.n_blocks, -1, np.int64)

    # -- bookkeeping --------------------------------------------------------

    def _code(self, status: LineStatus) -> int:
        return self._codes.index(status)

    def status_of(self, block: BlockCoord) -> LineStatus:
        return self._codes[self._status[self.geometry.block_id(block)]]

    def segment_in(self, block: BlockCoord) -> LineSegment | None:
        return self._segments.get(self.geometry.block_id(block))

    def live_segments(self) -> list[LineSegment]:
        """Live segments ordered row-major by admin block."""
        with self.lock:
            return sorted((s for s in self._segments.values() if s.status in LIVE_STATUSES),
                          key=lambda s: self.geometry.block_id(s.admin))

    def all_segments(self) -> list[LineSegment]:
        """Every segment ever installed, in creation order (for lifetimes)."""
        with self.lock:
            return list(self._all)

    def status_array(self) -> np.ndarray:
        return self._status.copy()

    def no_detect_code(self) -> int:
        return self._code(LineStatus.NO_DETECT)

    def allocate_id(self) -> int:
        with self.lock:
            lid = self._next_id
            self._next_id += 1
            return lid

    def _violate(self, message: str) -> None:
        self.violations.append(message)
        if self.strict:
            raise AssertionError(message)

    # -- transitions ---------------------------------------------------------

    def install_segment(self, seg: LineSegment) -> bool:
        """Register a freshly detected segment; block must still be NoDetect."""
        with self.lock:
            bid = self.geometry.block_id(seg.admin)
            if self._codes[self._status[bid]] is not LineStatus.NO_DETECT:
                return False
            if seg.status is not LineStatus.DETECTED:
                self._violate(f"install with status {seg.status.value}")
            self._status[bid] = self._code(LineStatus.DETECTED)
            self._segments[bid] = seg
            self._all.append(seg)
            return True

    def update_tracked(self, seg: LineSegment, new_status: LineStatus) -> None:
        with self.lock:
            if seg.status not in LIVE_STATUSES:
                self._violate(f"track update from {seg.status.value}")
            if new_status not in (LineStatus.GOOD_TRACK, LineStatus.BAD_TRACK):
                self._violate(f"track update to {new_status.value}")
            seg.status = new_status
            bid = self.geometry.block_id(seg.admin)
            if self._segments.get(bid) is seg:
                self._status[bid] = self._code(new_status)

    def retire_segment(self, seg: LineSegment, t_us: int) -> None:
        """BadTrack segment leaves; its block reopens for detection."""
        with self.lock:
            if seg.status is not LineStatus.BAD_TRACK:
                self._violate(f"retire from {seg.status.value}")
            seg.death_t_us = t_us
            bid = self.geometry.block_id(seg.admin)
            if self._segments.get(bid) is seg:
                del self._segments[bid]
                self._status[bid] = self._code(LineStatus.NO_DETECT)

    def transfer_segment(self, seg: LineSegment, new_block: BlockCoord) -> bool:
        """Move ownership to the block now holding the midpoint.

        The vacated block is suppressed. Returns False when the target
        block already owns a live segment (caller resolves the collision).
        """
        with self.lock:
            new_bid = self.geometry.block_id(new_block)
            occupant = self._segments.get(new_bid)
            if occupant is not None and occupant is not seg:
                return False
            old_bid = self.geometry.block_id(seg.admin)
            if self._codes[self._status[new_bid]] not in (
                    LineStatus.NO_DETECT, LineStatus.PROHIBIT_DETECTION):
                self._violate(f"transfer into {self._codes[self._status[new_bid]].value}")
            del self._segments[old_bid]
            self._status[old_bid] = self._code(LineStatus.PROHIBIT_DETECTION)
            self._segments[new_bid] = seg
            self._status[new_bid] = self._code(seg.status)
            seg.admin = new_block
            return True

    def suppress(self, block: BlockCoord) -> None:
        with self.lock:
            bid = self.geometry.block_id(block)
            if self._codes[self._status[bid]] is LineStatus.NO_DETECT:
                self._status[bid] = self._code(LineStatus.PROHIBIT_DETECTION)

    def release(self, block: BlockCoord) -> None:
        with self.lock:
            bid = self.geometry.block_id(block)
            if self._codes[self._status[bid]] is LineStatus.PROHIBIT_DETECTION:
                self._status[bid] = self._code(LineStatus.NO_DETECT)
            else:
                self._violate(f"release of {self._codes[self._status[bid]].value}")

    def prohibited_blocks(self) -> list[BlockCoord]:
        with self.lock:
            code = self._code(LineStatus.PROHIBIT_DETECTION)
            return [self.geometry.block_of_id(int(bid))
                    for bid in np.flatnonzero(self._status == code)]

    def verify_admin_uniqueness(self) -> None:
        """Record a violation if two live segments share a block."""
        with self.lock:
            for bid, seg in self._segments.items():
                if self.geometry.block_id(seg.admin) != bid:
                    self._violate(f"segment {seg.l_id} admin mismatch")
            live = [s for s in self._segments.values() if s.status in LIVE_STATUSES]
            admins = {self.geometry.block_id(s.admin) for s in live}
            if len(admins) != len(live):
                self._violate("two live segments share an admin block")


def detect_block(storage: ScarfStorage, state: LatticeState, block: BlockCoord,
                 params: DetectParams, t_us: int = 0) -> LineSegment | None:
    """Try to initialize a segment from one block's active events."""
    snap = storage.snapshot([block], include_inactive=False)
    if len(snap) < params.min_events:
        return None
    try:
        line = fit_line(snap.points())
    except DegenerateLineError:
        return None
    cand = clip_to_rect(line, storage.geometry.block_rect(block))
    if cand is None:
        return None
    score = fitting_score(snap.u, snap.v, snap.active, cand,
                          ScoreParams(params.d_max, snap.capacity))
    if not (score > params.f_th):
        return None
    return LineSegment(q0=cand.q0, q1=cand.q1, f=score, status=LineStatus.DETECTED,
                       admin=block, l_id=state.allocate_id(), birth_t_us=t_us)


def _prefilter_candidates(storage: ScarfStorage, state: LatticeState,
                          params: DetectParams) -> np.ndarray:
    """Block ids worth fitting: NoDetect, enough active events, anisotropic.

    The moment scan is advisory (taken without locks); its eigenvalue-ratio
    cut is strictly looser than fit_line's so it can only skip blocks the
    fit would reject anyway.
    """
    n_act, su, sv, suu, svv, suv = storage.block_stats()
    mask = (state.status_array() == state.no_detect_code()) & (n_act >= params.min_events)
    if not mask.any():
        return np.empty(0, np.int64)
    n = n_act[mask].astype(np.float64)
    cxx = suu[mask] / n - (su[mask] / n) ** 2
    cyy = svv[mask] / n - (sv[mask] / n) ** 2
    cxy = suv[mask] / n - (su[mask] / n) * (sv[mask] / n)
    half_tr = 0.5 * (cxx + cyy)
    disc = np.sqrt(np.maximum(0.25 * (cxx - cyy) ** 2 + cxy ** 2, 0.0))
    lam_hi = half_tr + disc
    lam_lo = np.maximum(half_tr - disc, 0.0)
    ok = (lam_hi > 1e-12) & (lam_lo / np.maximum(lam_hi, 1e-300) <= 0.9 + _PREFILTER_MARGIN)
    return np.flatnonzero(mask)[ok]


def _detect_blocks_dense(storage: ScarfStorage, bids: np.ndarray,
                         params: DetectParams):
    """Vectorised fit + clip + score over many blocks at once.

    Computes, for every candidate block row, the total-least-squares line of
    its active events, the chord through the block's active-region
    rectangle, and the fitting score: the same operations detect_block
    performs one block at a time, evaluated as (n_blocks, N) array math.
    Returns (accepted mask, q0x, q0y, q1x, q1y, score).
    """
    g = storage.geometry
    N = storage.capacity_per_block
    k = len(bids)
    u, v, act, count = storage.read_dense(bids)
    valid = np.arange(N)[None, :] < count[:, None]
    actv = valid & act

    n = actv.sum(axis=1).astype(np.float64)
    enough = n >= max(params.min_events, 2)
    n_safe = np.maximum(n, 1.0)
    su = np.where(actv, u, 0.0).sum(axis=1)
    sv = np.where(actv, v, 0.0).sum(axis=1)
    suu = np.where(actv, u * u, 0.0).sum(axis=1)
    svv = np.where(actv, v * v, 0.0).sum(axis=1)
    suv = np.where(actv, u * v, 0.0).sum(axis=1)
    mu, mv = su / n_safe, sv / n_safe
    cxx = suu / n_safe - mu * mu
    cyy = svv / n_safe - mv * mv
    cxy = suv / n_safe - mu * mv

    half_tr = 0.5 * (cxx + cyy)
    disc = np.sqrt(np.maximum(0.25 * (cxx - cyy) ** 2 + cxy ** 2, 0.0))
    lam_hi = half_tr + disc
    lam_lo = np.maximum(half_tr - disc, 0.0)
    well_formed = enough & (lam_hi > 1e-12)
    anisotropic = well_formed & \
        (lam_lo <= _DEGENERACY_RATIO * np.maximum(lam_hi, 1e-300))

    # principal eigenvector: take the better-conditioned construction
    v1x, v1y = lam_hi - cyy, cxy
    v2x, v2y = cxy, lam_hi - cxx
    use2 = v2x * v2x + v2y * v2y > v1x * v1x + v1y * v1y
    dx = np.where(use2, v2x, v1x)
    dy = np.where(use2, v2y, v1y)
    norm_d = np.sqrt(np.maximum(dx * dx + dy * dy, 1e-300))
    dx, dy = dx / norm_d, dy / norm_d
    flip = (dx < 0) | ((dx == 0) & (dy < 0))
    dx, dy = np.where(flip, -dx, dx), np.where(flip, -dy, dy)

    # clip the line (mu, mv) + t * (dx, dy) against the block rectangles
    bx0 = (bids % g.nx).astype(np.float64) * g.b
    by0 = (bids // g.nx).astype(np.float64) * g.b
    bx1 = np.minimum(bx0 + g.b, g.sensor.width)
    by1 = np.minimum(by0 + g.b, g.sensor.height)
    with np.errstate(divide="ignore", invalid="ignore"):
        tx1, tx2 = (bx0 - mu) / dx, (bx1 - mu) / dx
        ty1, ty2 = (by0 - mv) / dy, (by1 - mv) / dy
    small_x, small_y = np.abs(dx) < 1e-12, np.abs(dy) < 1e-12
    txmin = np.where(small_x, -np.inf, np.minimum(tx1, tx2))
    txmax = np.where(small_x, np.inf, np.maximum(tx1, tx2))
    tymin = np.where(small_y, -np.inf, np.minimum(ty1, ty2))
    tymax = np.where(small_y, np.inf, np.maximum(ty1, ty2))
    miss = (small_x & ((mu < bx0) | (mu > bx1))) | \
           (small_y & ((mv < by0) | (mv > by1)))
    tmin = np.maximum(txmin, tymin)
    tmax = np.minimum(txmax, tymax)
    has_chord = ~miss & (tmin < tmax - 1e-12) & np.isfinite(tmin) & np.isfinite(tmax)

    q0x, q0y = mu + tmin * dx, mv + tmin * dy
    q1x, q1y = mu + tmax * dx, mv + tmax * dy
    swap = (q1x < q0x) | ((q1x == q0x) & (q1y < q0y))
    q0x, q1x = np.where(swap, q1x, q0x), np.where(swap, q0x, q1x)
    q0y, q1y = np.where(swap, q1y, q0y), np.where(swap, q0y, q1y)

    # fitting score of each block's active events against its chord
    lx, ly = q1x - q0x, q1y - q0y
    norm = np.sqrt(np.maximum(lx * lx + ly * ly, 1e-300))
    du, dv = u - q0x[:, None], v - q0y[:, None]
    d1 = np.abs(du * ly[:, None] - dv * lx[:, None]) / norm[:, None]
    d2 = (du * lx[:, None] + dv * ly[:, None]) / norm[:, None]
    close = (d1 < params.d_max) & actv
    n_eff = close.sum(axis=1)
    near = close & (d2 >= 0.0) & (d2 < norm[:, None])
    max_bins = int(math.ceil(g.b * math.sqrt(2))) + 2
    bin_idx = np.floor(np.where(near, d2, 0.0)).astype(np.int64)
    flat = np.arange(k)[:, None] * max_bins + np.clip(bin_idx, 0, max_bins - 1)
    counts = np.bincount(flat[near].ravel(), minlength=k * max_bins)
    n_bins = (counts.reshape(k, max_bins) > 0).sum(axis=1)
    r_o = np.minimum(n_bins / norm, 1.0)
    score = r_o * (n_eff / storage.capacity_per_block)

    accepted = anisotropic & has_chord & (score > params.f_th)
    return accepted, q0x, q0y, q1x, q1y, score


def detection_pass(storage: ScarfStorage, state: LatticeState,
                   params: DetectParams, t_us: int = 0) -> list[LineSegment]:
    """One sweep over all NoDetect blocks, row-major; installs new segments.

    Candidate blocks are evaluated with the vectorised core; blocks whose
    buffer is unchanged since their last failed attempt are skipped
    outright (detection is a pure function of the buffer contents, so the
    outcome would repeat).
    """
    created: list[LineSegment] = []
    pushes = storage.push_counters()
    candidates = _prefilter_candidates(storage, state, params)
    candidates = candidates[pushes[candidates] != state._detect_seen[candidates]]
    if len(candidates) == 0:
        return created
    pushes_before = pushes[candidates].copy()
    accepted, q0x, q0y, q1x, q1y, score = _detect_blocks_dense(
        storage, candidates, params)
    for i, bid in enumerate(candidates):
        if not accepted[i]:
            state._detect_seen[bid] = pushes_before[i]
            continue
        block = state.geometry.block_of_id(int(bid))
        if state.status_of(block) is not LineStatus.NO_DETECT:
            continue
        seg = LineSegment(q0=(float(q0x[i]), float(q0y[i])),
                          q1=(float(q1x[i]), float(q1y[i])),
                          f=float(score[i]), status=LineStatus.DETECTED,
                          admin=block, l_id=state.allocate_id(),
                          birth_t_us=t_us)
        if state.install_segment(seg):
            created.append(seg)
    return created
