"""Heat-map precision/recall against ground truth, and lifetime statistics.

Predicted and ground-truth segments are rasterised one pixel wide and
compared through a Euclidean distance transform: a predicted pixel counts
as correct when it lies within tolerance of some ground-truth pixel, and
symmetrically for recall. The tolerance is given as a fraction of the
image diagonal. Scores are computed on cumulative masks at each whole
second so temporal stability shows up in the series.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .events import GroundTruthSegment, SensorGeometry
from .scarf import write_pgm
from .trace import TraceRow

PR_HEADER = ["t_s", "precision", "recall", "f_score"]
_PREDICTED_STATUSES = {"Detected", "GoodTrack"}


@dataclass(frozen=True)
class PRPoint:
    t: float
    precision: float
    recall: float
    f_score: float


@dataclass(frozen=True)
class LifetimeStats:
    count: int
    mean_s: float
    std_s: float
    max_s: float


def rasterize_segment(mask: np.ndarray, x0: float, y0: float,
                      x1: float, y1: float) -> None:
    """Set the 1-px-wide integer raster of a segment into ``mask``."""
    h, w = mask.shape
    n = max(int(math.ceil(max(abs(x1 - x0), abs(y1 - y0)))), 0) + 1
    xs = np.floor(np.linspace(x0, x1, n) + 0.5).astype(np.int64)
    ys = np.floor(np.linspace(y0, y1, n) + 0.5).astype(np.int64)
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    mask[ys[ok], xs[ok]] = True


def rasterize(segments, geometry: SensorGeometry) -> np.ndarray:
    """Union raster of (x0, y0, x1, y1) segments as a boolean mask."""
    mask = np.zeros((geometry.height, geometry.width), bool)
    for x0, y0, x1, y1 in segments:
        rasterize_segment(mask, x0, y0, x1, y1)
    return mask


def pr_at(pred: np.ndarray, gt: np.ndarray, tau: float, t: float = 0.0) -> PRPoint:
    """Precision/recall of one mask pair at pixel tolerance ``tau``.

    Empty-side conventions keep the scores defined: an empty prediction has
    precision 1, an empty ground truth has recall 1. ``tau`` is rounded to
    the nearest 0.01 px and the comparison is inclusive.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    tau_r = round(tau * 100.0) / 100.0 + 1e-9
    n_pred = int(np.count_nonzero(pred))
    n_gt = int(np.count_nonzero(gt))
    if n_pred == 0:
        precision = 1.0
    else:
        dist_to_gt = ndimage.distance_transform_edt(~gt) if n_gt else None
        precision = 0.0 if dist_to_gt is None else \
            float(np.count_nonzero(dist_to_gt[pred] <= tau_r)) / n_pred
    if n_gt == 0:
        recall = 1.0
    else:
        dist_to_pred = ndimage.distance_transform_edt(~pred) if n_pred else None
        recall = 0.0 if dist_to_pred is None else \
            float(np.count_nonzero(dist_to_pred[gt] <= tau_r)) / n_gt
    denom = precision + recall
    f_score = 2.0 * precision * recall / denom if denom > 0 else 0.0
    return PRPoint(t, precision, recall, f_score)


def pr_series(trace: list[TraceRow], gt: list[GroundTruthSegment],
              geometry: SensorGeometry, tau: float,
              heatmap_dir: str | Path | None = None) -> list[PRPoint]:
    """Cumulative precision/recall at each whole second of the run."""
    t_max_us = 0
    if trace:
        t_max_us = max(t_max_us, max(r.t_us for r in trace))
    if gt:
        t_max_us = max(t_max_us, max(g.t for g in gt))
    n_seconds = int(math.ceil(t_max_us / 1e6))
    pred_mask = np.zeros((geometry.height, geometry.width), bool)
    gt_mask = np.zeros_like(pred_mask)

    pred_rows = sorted((r for r in trace if r.status in _PREDICTED_STATUSES),
                       key=lambda r: r.t_us)
    gt_rows = sorted(gt, key=lambda g: g.t)
    pi = gi = 0
    points: list[PRPoint] = []
    for s in range(1, n_seconds + 1):
        limit = s * 1e6
        while pi < len(pred_rows) and pred_rows[pi].t_us <= limit:
            r = pred_rows[pi]
            rasterize_segment(pred_mask, r.x0, r.y0, r.x1, r.y1)
            pi += 1
        while gi < len(gt_rows) and gt_rows[gi].t <= limit:
            g = gt_rows[gi]
            rasterize_segment(gt_mask, g.x0, g.y0, g.x1, g.y1)
            gi += 1
        points.append(pr_at(pred_mask, gt_mask, tau, t=float(s)))
        if heatmap_dir is not None:
            out = Path(heatmap_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_pgm(pred_mask.astype(np.uint8) * 255, out / f"pred_{s:04d}.pgm")
    return points


def lifetime_stats(trace: list[TraceRow],
                   run_end_us: int | None = None) -> LifetimeStats:
    """Per-segment lifetime aggregate (population std), in seconds.

    A segment's death is its BadTrack row; segments still live at the end
    of the trace use ``run_end_us`` (default: the last trace timestamp).
    """
    if not trace:
        return LifetimeStats(0, 0.0, 0.0, 0.0)
    if run_end_us is None:
        run_end_us = max(r.t_us for r in trace)
    birth: dict[int, int] = {}
    death: dict[int, int] = {}
    for r in trace:
        if r.l_id not in birth:
            birth[r.l_id] = r.t_us
        birth[r.l_id] = min(birth[r.l_id], r.t_us)
        if r.status == "BadTrack":
            death[r.l_id] = r.t_us
    durations = np.array([(death.get(lid, run_end_us) - t0) / 1e6
                          for lid, t0 in birth.items()], np.float64)
    return LifetimeStats(count=len(durations),
                         mean_s=float(durations.mean()),
                         std_s=float(durations.std()),   # population
                         max_s=float(durations.max()))


def write_pr_series(points: list[PRPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PR_HEADER)
        for p in points:
            writer.writerow([p.t, repr(p.precision), repr(p.recall), repr(p.f_score)])


def read_pr_series(path: str | Path) -> list[PRPoint]:
    out: list[PRPoint] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != PR_HEADER:
            raise ValueError(f"bad PR header: {header}")
        for row in reader:
            if row:
                out.append(PRPoint(float(row[0]), float(row[1]),
                                   float(row[2]), float(row[3])))
    return out
