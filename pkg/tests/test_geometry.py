import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supervec.geometry import (
    N_PARAMS,
    ClosedPath,
    GeometryError,
    PathSequence,
    Polyline,
    circle_path,
    eval_cubic,
    flatten,
    rect_path,
    segment_distance,
    signed_distance,
    winding_number,
)

UNIT_SQUARE = Polyline([(0, 0), (1, 0), (1, 1), (0, 1)])


def random_path(rng, spread=0.2):
    return ClosedPath(rng.uniform(0.5 - spread, 0.5 + spread, (12, 2)), rng.random(3), rng.random())


def test_eval_cubic_endpoints_and_line():
    seg = np.array([(0, 0), (1 / 3, 0), (2 / 3, 0), (1, 0)])
    assert np.array_equal(eval_cubic(seg, 0.0), seg[0])
    assert np.array_equal(eval_cubic(seg, 1.0), seg[3])
    assert np.allclose(eval_cubic(seg, 0.5), (0.5, 0.0), atol=1e-15)


@given(st.lists(st.floats(-10, 10), min_size=8, max_size=8))
def test_eval_cubic_interpolates_endpoints_exactly(coords):
    seg = np.array(coords).reshape(4, 2)
    assert np.array_equal(eval_cubic(seg, 0.0), seg[0])
    assert np.array_equal(eval_cubic(seg, 1.0), seg[3])


def test_eval_cubic_rejects_t_outside_unit_interval():
    with pytest.raises(GeometryError):
        eval_cubic(np.zeros((4, 2)), 1.5)


def test_path_layout_is_28_parameters_and_closed():
    p = circle_path((0.5, 0.5), 0.2, (0.1, 0.2, 0.3), 0.7)
    vec = p.to_vector()
    assert vec.shape == (N_PARAMS,) == (28,)
    segs = p.segments()
    assert segs.shape == (4, 4, 2)
    # segment 3 ends at point 0, and each segment starts where the last ended
    assert np.array_equal(segs[3, 3], p.control[0])
    for i in range(3):
        assert np.array_equal(segs[i, 3], segs[i + 1, 0])
    assert np.array_equal(ClosedPath.from_vector(vec).to_vector(), vec)


def test_straight_square_flattens_to_four_vertices():
    sq = rect_path(0.1, 0.1, 0.9, 0.9)
    for tol in (1e-1, 1e-3, 1e-6):
        assert len(flatten(sq, tol).vertices) == 4


def test_circle_flattening_area_close_to_disc():
    r = 0.3
    poly = flatten(circle_path((0.5, 0.5), r), 1e-3)
    assert abs(abs(poly.area()) - math.pi * r * r) / (math.pi * r * r) < 5e-3


def test_halving_tolerance_never_removes_vertices():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = random_path(rng)
        counts = [len(flatten(p, tol).vertices) for tol in (1e-1, 5e-2, 2.5e-2, 1.25e-2, 6e-3)]
        assert counts == sorted(counts)


def test_flattening_stays_within_tolerance_of_dense_samples():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 1, 200)
    for _ in range(100):
        p = random_path(rng)
        tol = 2e-3
        poly = flatten(p, tol)
        a, b = poly.edges()
        dense = np.concatenate([[eval_cubic(seg, float(x)) for x in t] for seg in p.segments()])
        dev = segment_distance(a, b, dense).min(axis=1).max()
        assert dev <= tol + 1e-12


def test_degenerate_path_is_flagged():
    p = ClosedPath(np.full((12, 2), 0.4))
    poly = flatten(p, 1e-3)
    assert poly.degenerate and len(poly.vertices) == 1
    with pytest.raises(GeometryError):
        signed_distance(poly, (0.0, 0.0))


def test_winding_unit_square():
    assert winding_number(UNIT_SQUARE, (0.5, 0.5)) == 1
    assert winding_number(UNIT_SQUARE, (2, 2)) == 0


def test_winding_double_loop_counts_two():
    # a square traversed twice winds twice around its interior; count by hand: 2
    loop = [(0, 0), (1, 0), (1, 1), (0, 1)]
    poly = Polyline(loop + loop)
    assert abs(winding_number(poly, (0.5, 0.5))) == 2
    assert winding_number(poly, (1.5, 0.5)) == 0


def test_winding_figure_eight_lobes_have_opposite_sign():
    # bow-tie: left lobe traversed one way, right lobe the other
    poly = Polyline([(0, 0), (2, 1), (2, 0), (0, 1)])
    left = winding_number(poly, (0.2, 0.5))
    right = winding_number(poly, (1.8, 0.5))
    assert abs(left) == 1 and abs(right) == 1 and left == -right


def test_winding_open_polyline_is_an_error():
    with pytest.raises(GeometryError):
        winding_number(Polyline([(0, 0), (1, 0), (1, 1)], closed=False), (0.5, 0.2))


def _parity(poly, p):
    # ray casting toward +x
    inside = False
    a, b = poly.edges()
    for (ax, ay), (bx, by) in zip(a, b):
        if (ay > p[1]) != (by > p[1]):
            x = ax + (p[1] - ay) * (bx - ax) / (by - ay)
            if x > p[0]:
                inside = not inside
    return inside


def test_winding_matches_parity_on_convex_polygons():
    rng = np.random.default_rng(3)
    for _ in range(10):
        ang = np.sort(rng.uniform(0, 2 * np.pi, 7))
        poly = Polyline(np.c_[np.cos(ang), np.sin(ang)])
        pts = rng.uniform(-1.2, 1.2, (100, 2))
        wn = winding_number(poly, pts)
        assert all((w != 0) == _parity(poly, p) for w, p in zip(wn, pts))


def test_signed_distance_unit_square():
    assert signed_distance(UNIT_SQUARE, (0.5, 0.5)) == pytest.approx(-0.5)
    assert signed_distance(UNIT_SQUARE, (1.5, 0.5)) == pytest.approx(0.5)
    assert abs(signed_distance(UNIT_SQUARE, (1.0, 0.3))) < 1e-12


def test_signed_distance_sign_agrees_with_winding():
    rng = np.random.default_rng(4)
    poly = flatten(random_path(rng), 1e-3)
    pts = rng.uniform(0, 1, (500, 2))
    sd = signed_distance(poly, pts)
    inside = winding_number(poly, pts) != 0
    off = np.abs(sd) > 1e-9
    assert np.array_equal(sd[off] < 0, inside[off])


def test_path_sequence_indexing_and_concatenation():
    seq = PathSequence.from_paths([circle_path((0.5, 0.5), 0.1, beta=b) for b in (0.2, 0.6, 0.9)])
    assert isinstance(seq[0], ClosedPath)
    assert len(seq[1:]) == 2
    assert len(seq[seq.betas > 0.5]) == 2
    assert seq.visible_count() == 2 and len(seq.visible()) == 2
    both = seq[:1] + seq[1:]
    assert np.array_equal(both.params, seq.params)


def test_path_sequence_rejects_wrong_width():
    with pytest.raises(GeometryError):
        PathSequence(np.zeros((2, 27)))


def test_non_finite_control_points_rejected():
    with pytest.raises(GeometryError):
        ClosedPath(np.full((12, 2), np.nan))


@settings(max_examples=30)
@given(st.floats(0.05, 0.4), st.floats(0.3, 0.7), st.floats(0.3, 0.7))
def test_circle_centre_is_inside(r, cx, cy):
    poly = flatten(circle_path((cx, cy), r), 1e-3)
    assert winding_number(poly, (cx, cy)) != 0
    # chords cut inside the curve by at most the flattening tolerance
    assert signed_distance(poly, (cx, cy)) == pytest.approx(-r, abs=1e-3 + 3e-4 * r)
