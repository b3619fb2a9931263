import numpy as np
import pytest

from evline.evaluation import (LifetimeStats, lifetime_stats, pr_at, pr_series,
                               rasterize, read_pr_series, write_pr_series)
from evline.events import GroundTruthSegment, SensorGeometry
from evline.trace import TraceRow

GEO = SensorGeometry(64, 48)


def row(t_us, l_id, status, x0, y0, x1, y1):
    return TraceRow(t_us, l_id, status, 0, 0, x0, y0, x1, y1, 0.5)


def test_rasterize_empty():
    assert not rasterize([], GEO).any()


def test_rasterize_horizontal():
    mask = rasterize([(0, 4, 8, 4)], GEO)
    assert mask[4, 0:9].all()
    assert mask.sum() == 9


def test_rasterize_diagonal():
    mask = rasterize([(0, 0, 3, 3)], GEO)
    assert [tuple(p) for p in np.argwhere(mask)] == [(0, 0), (1, 1), (2, 2), (3, 3)]


def test_rasterize_clips_to_sensor():
    mask = rasterize([(-5, 4, 70, 4)], GEO)
    assert mask[4].all() and mask.sum() == 64


def test_pr_identity():
    mask = rasterize([(2, 2, 20, 17)], GEO)
    p = pr_at(mask, mask, tau=0.0)
    assert (p.precision, p.recall, p.f_score) == (1.0, 1.0, 1.0)


def test_pr_empty_prediction_convention():
    gt = rasterize([(0, 4, 8, 4)], GEO)
    p = pr_at(np.zeros_like(gt), gt, tau=2.0)
    assert (p.precision, p.recall, p.f_score) == (1.0, 0.0, 0.0)


def test_pr_empty_gt_convention():
    pred = rasterize([(0, 4, 8, 4)], GEO)
    p = pr_at(pred, np.zeros_like(pred), tau=2.0)
    assert (p.precision, p.recall, p.f_score) == (0.0, 1.0, 0.0)


def test_pr_both_empty():
    empty = np.zeros((48, 64), bool)
    p = pr_at(empty, empty, tau=2.0)
    assert (p.precision, p.recall, p.f_score) == (1.0, 1.0, 1.0)


def test_pr_shift_by_exactly_tau_inclusive():
    gt = rasterize([(5, 10, 20, 10)], GEO)
    pred = rasterize([(5, 13, 20, 13)], GEO)  # shifted by exactly 3 px
    p = pr_at(pred, gt, tau=3.0)
    assert (p.precision, p.recall) == (1.0, 1.0)
    p = pr_at(pred, gt, tau=2.99)
    assert p.precision == 0.0 and p.recall == 0.0


def test_pr_mismatched_shapes():
    with pytest.raises(ValueError):
        pr_at(np.zeros((4, 4), bool), np.zeros((4, 5), bool), 1.0)


def test_pr_at_identity_random_masks():
    rng = np.random.default_rng(0)
    for _ in range(20):
        mask = rng.random((48, 64)) < 0.05
        p = pr_at(mask, mask, tau=rng.uniform(0, 4))
        assert (p.precision, p.recall, p.f_score) == (1.0, 1.0, 1.0)


def test_pr_monotone_in_tau():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = rng.random((48, 64)) < 0.03
        b = rng.random((48, 64)) < 0.03
        last_p, last_r = 0.0, 0.0
        for tau in (0.0, 1.0, 2.0, 4.0, 8.0):
            p = pr_at(a, b, tau)
            assert p.precision >= last_p - 1e-12
            assert p.recall >= last_r - 1e-12
            last_p, last_r = p.precision, p.recall


def test_pr_series_perfect_tracker():
    gt = [GroundTruthSegment(t, 0, 5.0, 5.0, 30.0, 30.0)
          for t in range(0, 3_000_001, 1000)]
    trace = [row(t, 0, "GoodTrack", 5.0, 5.0, 30.0, 30.0)
             for t in range(0, 3_000_001, 10_000)]
    points = pr_series(trace, gt, GEO, tau=1.0)
    assert len(points) == 3
    assert all(p.precision == 1.0 and p.recall == 1.0 and p.f_score == 1.0
               for p in points)


def test_pr_series_everything_off_by_more_than_tau():
    gt = [GroundTruthSegment(0, 0, 5.0, 5.0, 30.0, 5.0)]
    trace = [row(500_000, 0, "GoodTrack", 5.0, 40.0, 30.0, 40.0)]
    points = pr_series(trace, gt, GEO, tau=2.0)
    assert points[0].precision == 0.0 and points[0].recall == 0.0


def test_pr_series_cumulative_semantics():
    gt = [GroundTruthSegment(500_000, 0, 5.0, 5.0, 30.0, 5.0)]  # second 1 only
    trace = [row(1_500_000, 0, "GoodTrack", 5.0, 5.0, 30.0, 5.0)]  # second 2
    points = pr_series(trace, gt, GEO, tau=1.0)
    assert points[0].recall == 0.0          # nothing predicted yet
    assert points[1].precision == 1.0 and points[1].recall == 1.0


def test_pr_series_ignores_badtrack_rows():
    gt = [GroundTruthSegment(0, 0, 5.0, 5.0, 30.0, 5.0)]
    trace = [row(100, 0, "BadTrack", 5.0, 40.0, 30.0, 40.0)]
    points = pr_series(trace, gt, GEO, tau=1.0)
    assert points[0].precision == 1.0  # vacuous: BadTrack draws nothing


def test_lifetimes_empty():
    assert lifetime_stats([]) == LifetimeStats(0, 0.0, 0.0, 0.0)


def test_lifetime_single_live_segment():
    trace = [row(0, 7, "Detected", 0, 0, 1, 1),
             row(2_000_000, 7, "GoodTrack", 0, 0, 1, 1)]
    stats = lifetime_stats(trace)
    assert stats == LifetimeStats(1, 2.0, 0.0, 2.0)


def test_lifetime_population_std():
    trace = [row(0, 1, "Detected", 0, 0, 1, 1),
             row(1_000_000, 1, "BadTrack", 0, 0, 1, 1),
             row(0, 2, "Detected", 0, 0, 1, 1),
             row(3_000_000, 2, "BadTrack", 0, 0, 1, 1)]
    stats = lifetime_stats(trace)
    assert stats.count == 2
    assert stats.mean_s == pytest.approx(2.0)
    assert stats.std_s == pytest.approx(1.0)
    assert stats.max_s == pytest.approx(3.0)


def test_pr_series_csv_round_trip(tmp_path):
    points = [type(pr_at(np.zeros((4, 4), bool), np.zeros((4, 4), bool), 1.0))(
        t=1.0, precision=0.5, recall=0.25, f_score=1 / 3)]
    path = tmp_path / "pr.csv"
    write_pr_series(points, path)
    assert read_pr_series(path) == points


def test_heatmap_dump(tmp_path):
    gt = [GroundTruthSegment(0, 0, 5.0, 5.0, 30.0, 5.0)]
    trace = [row(100, 0, "GoodTrack", 5.0, 5.0, 30.0, 5.0)]
    pr_series(trace, gt, GEO, tau=1.0, heatmap_dir=tmp_path / "hm")
    assert (tmp_path / "hm" / "pred_0001.pgm").exists()
