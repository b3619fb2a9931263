"""Scalar geometry and scoring for line-segment candidates.

A candidate segment is scored by the product of two ratios in [0, 1]:

* occupancy ratio ``r_o`` — the fraction of unit-length bins along the
  segment that contain at least one event closer than ``d_max``
  perpendicular to it (how evenly events cover the segment), and
* effective event ratio ``r_e`` — the number of *active* events closer
  than ``d_max``, normalized by the summed buffer capacity of the blocks
  considered.

Occupancy counts every event it is given (snapshots decide whether
inactive events are present); the effective ratio counts active events
only. Perpendicular distance comparison is strict (``d1 < d_max``), and
events projecting outside the segment (``d2 < 0`` or ``d2 >= |L|``) set no
occupancy bin but still count toward ``r_e`` when close enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_DEGENERACY_RATIO = 0.9   # reject fits whose scatter is this isotropic
_EPS = 1e-12


class DegenerateLineError(ValueError):
    """Candidate or point cloud admits no meaningful line."""


@dataclass(frozen=True)
class Candidate:
    """Segment hypothesis with endpoints in sub-pixel coordinates."""

    q0: tuple[float, float]
    q1: tuple[float, float]
    vec: tuple[float, float] = field(init=False)
    length: float = field(init=False)

    def __post_init__(self) -> None:
        vec = (self.q1[0] - self.q0[0], self.q1[1] - self.q0[1])
        object.__setattr__(self, "vec", vec)
        object.__setattr__(self, "length", math.hypot(*vec))

    @property
    def midpoint(self) -> tuple[float, float]:
        return (0.5 * (self.q0[0] + self.q1[0]), 0.5 * (self.q0[1] + self.q1[1]))


@dataclass(frozen=True)
class ScoreParams:
    d_max: float
    capacity: int

    def __post_init__(self) -> None:
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")


@dataclass(frozen=True)
class Line:
    """Infinite line through ``point`` with unit ``direction``."""

    point: tuple[float, float]
    direction: tuple[float, float]


def distances(qu: np.ndarray, qv: np.ndarray, cand: Candidate):
    """Perpendicular distance d1 (>= 0) and signed projection d2 along L."""
    lx, ly = cand.vec
    norm = cand.length
    if norm < _EPS:
        raise DegenerateLineError("zero-length candidate")
    du = np.asarray(qu, np.float64) - cand.q0[0]
    dv = np.asarray(qv, np.float64) - cand.q0[1]
    d1 = np.abs(du * ly - dv * lx) / norm
    d2 = (du * lx + dv * ly) / norm
    return d1, d2


def point_distances(q: tuple[float, float], cand: Candidate) -> tuple[float, float]:
    d1, d2 = distances(np.array([q[0]]), np.array([q[1]]), cand)
    return float(d1[0]), float(d2[0])


def occupancy_ratio(u: np.ndarray, v: np.ndarray, cand: Candidate,
                    params: ScoreParams) -> float:
    """Fraction of the segment's unit bins covered by nearby events."""
    norm = cand.length
    if norm < _EPS:
        raise DegenerateLineError("zero-length candidate")
    if len(u) == 0:
        return 0.0
    d1, d2 = distances(u, v, cand)
    near = (d1 < params.d_max) & (d2 >= 0.0) & (d2 < norm)
    if not near.any():
        return 0.0
    bins = np.unique(np.floor(d2[near]).astype(np.int64))
    return min(len(bins) / norm, 1.0)


def effective_ratio(u: np.ndarray, v: np.ndarray, active: np.ndarray,
                    cand: Candidate, params: ScoreParams) -> float:
    """Active events within d_max of the line, relative to buffer capacity."""
    if len(u) == 0:
        return 0.0
    d1, _ = distances(u, v, cand)
    n = int(np.count_nonzero((d1 < params.d_max) & active))
    return n / params.capacity


def fitting_score(u: np.ndarray, v: np.ndarray, active: np.ndarray,
                  cand: Candidate, params: ScoreParams) -> float:
    """Product of occupancy and effective ratios (one shared distance pass)."""
    norm = cand.length
    if norm < _EPS:
        raise DegenerateLineError("zero-length candidate")
    if len(u) == 0:
        return 0.0
    d1, d2 = distances(u, v, cand)
    close = d1 < params.d_max
    n_effective = int(np.count_nonzero(close & active))
    if n_effective == 0:
        return 0.0
    near = close & (d2 >= 0.0) & (d2 < norm)
    if not near.any():
        return 0.0
    bins = np.bincount(np.floor(d2[near]).astype(np.int64))
    r_o = min(int(np.count_nonzero(bins)) / norm, 1.0)
    return r_o * (n_effective / params.capacity)


def fit_line(points: np.ndarray) -> Line:
    """Total-least-squares line through a 2D point cloud.

    The line passes through the centroid along the principal axis of the
    scatter matrix, which minimizes summed squared perpendicular distance.
    Raises DegenerateLineError for coincident points or near-isotropic
    clouds (eigenvalue ratio above 0.9).
    """
    pts = np.asarray(points, np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise DegenerateLineError(f"need >= 2 points, got shape {pts.shape}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    lam_small, lam_large = float(evals[0]), float(evals[1])
    if lam_large < _EPS:
        raise DegenerateLineError("all points coincident")
    if lam_small / lam_large > _DEGENERACY_RATIO:
        raise DegenerateLineError(
            f"isotropic scatter (eigenvalue ratio {lam_small / lam_large:.3f})")
    d = evecs[:, 1]
    # canonical orientation: positive x, tie toward positive y
    if d[0] < 0 or (d[0] == 0 and d[1] < 0):
        d = -d
    return Line((float(centroid[0]), float(centroid[1])), (float(d[0]), float(d[1])))


def clip_to_rect(line: Line, rect: tuple[float, float, float, float]) -> Candidate | None:
    """Intersect an infinite line with a rectangle (x0, y0, x1, y1).

    Returns the chord as a Candidate with endpoints ordered by (x, then y),
    or None when the line misses the rectangle or only grazes a corner.
    """
    x0, y0, x1, y1 = rect
    px, py = line.point
    dx, dy = line.direction
    tmin, tmax = -math.inf, math.inf
    for p, d, lo, hi in ((px, dx, x0, x1), (py, dy, y0, y1)):
        if abs(d) < _EPS:
            if p < lo or p > hi:
                return None
            continue
        ta, tb = (lo - p) / d, (hi - p) / d
        if ta > tb:
            ta, tb = tb, ta
        tmin, tmax = max(tmin, ta), min(tmax, tb)
    if not (tmin < tmax - _EPS) or math.isinf(tmin) or math.isinf(tmax):
        return None
    a = (px + tmin * dx, py + tmin * dy)
    b = (px + tmax * dx, py + tmax * dy)
    if (b[0], b[1]) < (a[0], a[1]):
        a, b = b, a
    return Candidate(a, b)
