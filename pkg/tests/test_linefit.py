import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evline.linefit import (Candidate, DegenerateLineError, Line, ScoreParams,
                            clip_to_rect, distances, effective_ratio, fit_line,
                            fitting_score, occupancy_ratio, point_distances)
from oracles import oracle_fitting_score


def test_distances_axis_aligned():
    cand = Candidate((0, 0), (4, 0))
    assert point_distances((2, 3), cand) == (3.0, 2.0)


def test_distances_at_q0():
    assert point_distances((0, 0), Candidate((0, 0), (4, 0))) == (0.0, 0.0)


def test_distances_at_far_endpoint():
    d1, d2 = point_distances((3, 4), Candidate((0, 0), (3, 4)))
    assert d1 == pytest.approx(0.0)
    assert d2 == pytest.approx(5.0)


def test_distances_rejects_degenerate():
    with pytest.raises(DegenerateLineError):
        point_distances((1, 1), Candidate((2, 2), (2, 2)))


def _params(d_max=1.6, capacity=64):
    return ScoreParams(d_max=d_max, capacity=capacity)


def _arrays(points):
    u = np.array([p[0] for p in points], float)
    v = np.array([p[1] for p in points], float)
    return u, v


def test_occupancy_no_events():
    cand = Candidate((0, 0), (8, 0))
    assert occupancy_ratio(np.array([]), np.array([]), cand, _params()) == 0.0


def test_occupancy_full_cover():
    u, v = _arrays([(k + 0.5, 0) for k in range(8)])
    assert occupancy_ratio(u, v, Candidate((0, 0), (8, 0)), _params()) == 1.0


def test_occupancy_half_cover():
    u, v = _arrays([(k + 0.5, 0) for k in range(4)])
    assert occupancy_ratio(u, v, Candidate((0, 0), (8, 0)), _params()) == 0.5


def test_occupancy_ignores_projections_outside_segment():
    u, v = _arrays([(-0.5, 0), (8.5, 0)])
    assert occupancy_ratio(u, v, Candidate((0, 0), (8, 0)), _params()) == 0.0


def test_effective_counts_active_near_line():
    u, v = _arrays([(k, 0) for k in range(8)])
    active = np.ones(8, bool)
    assert effective_ratio(u, v, active, Candidate((0, 0), (8, 0)), _params()) == 0.125


def test_effective_ignores_inactive_and_far():
    u, v = _arrays([(0, 0), (1, 0), (2, 5)])
    active = np.array([True, False, True])
    r = effective_ratio(u, v, active, Candidate((0, 0), (8, 0)), _params(capacity=4))
    assert r == 0.25  # only (0,0): (1,0) inactive, (2,5) too far


def test_effective_counts_behind_q0_when_close():
    u, v = _arrays([(-0.5, 0)])
    r = effective_ratio(u, v, np.array([True]), Candidate((0, 0), (8, 0)),
                        _params(capacity=1))
    assert r == 1.0


def test_fitting_score_product():
    u, v = _arrays([(k, 0) for k in range(8)])
    active = np.ones(8, bool)
    f = fitting_score(u, v, active, Candidate((0, 0), (8, 0)), _params())
    assert f == pytest.approx(0.125)  # r_o = 1, r_e = 8/64


def test_fitting_score_empty():
    cand = Candidate((0, 0), (8, 0))
    assert fitting_score(np.array([]), np.array([]), np.array([], bool),
                         cand, _params()) == 0.0


def test_fitting_score_maximum():
    pts = [(k % 8, 0) for k in range(64)]
    u, v = _arrays(pts)
    f = fitting_score(u, v, np.ones(64, bool), Candidate((0, 0), (8, 0)), _params())
    assert f == pytest.approx(1.0)


def test_fit_line_horizontal():
    line = fit_line(np.array([(0, 0), (1, 0), (2, 0), (3, 0)], float))
    assert line.direction == pytest.approx((1.0, 0.0))
    assert line.point[1] == pytest.approx(0.0)


def test_fit_line_diagonal():
    line = fit_line(np.array([(0, 0), (1, 1), (2, 2)], float))
    assert line.point == pytest.approx((1.0, 1.0))
    assert line.direction == pytest.approx((1 / math.sqrt(2), 1 / math.sqrt(2)))


def test_fit_line_rejects_isotropic_square():
    with pytest.raises(DegenerateLineError):
        fit_line(np.array([(0, 0), (1, 0), (0, 1), (1, 1)], float))


def test_fit_line_rejects_coincident():
    with pytest.raises(DegenerateLineError):
        fit_line(np.array([(2, 2), (2, 2), (2, 2)], float))


def test_clip_horizontal_chord():
    cand = clip_to_rect(Line((3, 4), (1, 0)), (0, 0, 8, 8))
    assert cand.q0 == pytest.approx((0.0, 4.0))
    assert cand.q1 == pytest.approx((8.0, 4.0))


def test_clip_diagonal():
    s = 1 / math.sqrt(2)
    cand = clip_to_rect(Line((4, 4), (s, s)), (0, 0, 8, 8))
    assert cand.q0 == pytest.approx((0.0, 0.0))
    assert cand.q1 == pytest.approx((8.0, 8.0))
    assert cand.length == pytest.approx(8 * math.sqrt(2))


def test_clip_miss():
    s = 1 / math.sqrt(2)
    assert clip_to_rect(Line((0, 100), (s, s)), (0, 0, 8, 8)) is None


def test_clip_corner_graze_returns_none():
    # y = x + 8 touches the square only at (0, 8): zero-length chord
    s = 1 / math.sqrt(2)
    assert clip_to_rect(Line((0, 8), (s, s)), (0, 0, 8, 8)) is None


# -- properties ---------------------------------------------------------------

score_case = st.tuples(
    st.lists(st.tuples(st.floats(-2, 10), st.floats(-2, 10), st.booleans()),
             max_size=40),
    st.tuples(st.floats(0, 8), st.floats(0, 8), st.floats(0, 8), st.floats(0, 8)),
    st.floats(0.1, 3.0),
)


@settings(max_examples=300, deadline=None)
@given(score_case)
def test_score_bounds_and_oracle(case):
    evts, (x0, y0, x1, y1), d_max = case
    if math.hypot(x1 - x0, y1 - y0) < 1e-6:
        return
    cand = Candidate((x0, y0), (x1, y1))
    u = np.array([e[0] for e in evts], float)
    v = np.array([e[1] for e in evts], float)
    act = np.array([e[2] for e in evts], bool)
    params = ScoreParams(d_max=d_max, capacity=40)
    r_o = occupancy_ratio(u, v, cand, params)
    r_e = effective_ratio(u, v, act, cand, params)
    f = fitting_score(u, v, act, cand, params)
    assert 0.0 <= r_o <= 1.0 and 0.0 <= r_e <= 1.0 and 0.0 <= f <= 1.0
    expected = oracle_fitting_score(evts, (x0, y0), (x1, y1), d_max, 40)
    assert f == pytest.approx(expected, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 20)),
                min_size=3, max_size=50))
def test_fit_line_beats_random_lines(points):
    pts = np.array(points, float)
    try:
        line = fit_line(pts)
    except DegenerateLineError:
        return
    centroid = pts.mean(axis=0)

    def residual(direction):
        d = np.asarray(direction) / np.linalg.norm(direction)
        rel = pts - centroid
        perp = rel[:, 0] * d[1] - rel[:, 1] * d[0]
        return float((perp ** 2).sum())

    best = residual(line.direction)
    rng = np.random.default_rng(0)
    for theta in rng.uniform(0, np.pi, 1000):
        assert best <= residual((np.cos(theta), np.sin(theta))) + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 18), st.floats(-10, 18), st.floats(0, 2 * np.pi))
def test_clip_endpoints_on_boundary(px, py, theta):
    rect = (0.0, 0.0, 8.0, 8.0)
    line = Line((px, py), (math.cos(theta), math.sin(theta)))
    cand = clip_to_rect(line, rect)
    if cand is None:
        return
    for (x, y) in (cand.q0, cand.q1):
        on_x = min(abs(x - rect[0]), abs(x - rect[2])) < 1e-9
        on_y = min(abs(y - rect[1]), abs(y - rect[3])) < 1e-9
        assert on_x or on_y
        assert rect[0] - 1e-9 <= x <= rect[2] + 1e-9
        assert rect[1] - 1e-9 <= y <= rect[3] + 1e-9
    assert (cand.q0[0], cand.q0[1]) <= (cand.q1[0], cand.q1[1])


def test_score_monotone_in_added_near_event():
    rng = np.random.default_rng(2)
    cand = Candidate((0, 0), (8, 6))
    params = _params(d_max=1.0, capacity=100)
    u = rng.uniform(0, 8, 30)
    v = rng.uniform(0, 6, 30)
    act = rng.random(30) < 0.5
    base_o = occupancy_ratio(u, v, cand, params)
    base_e = effective_ratio(u, v, act, cand, params)
    for frac in np.linspace(0.05, 0.95, 10):
        qx = frac * 8
        qy = frac * 6  # exactly on the line
        u2 = np.append(u, qx)
        v2 = np.append(v, qy)
        act2 = np.append(act, True)
        assert occupancy_ratio(u2, v2, cand, params) >= base_o
        assert effective_ratio(u2, v2, act2, cand, params) > base_e
