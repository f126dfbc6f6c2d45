import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mapeval.geometry import (
    DegenerateGeometryWarning,
    box_gap,
    box_giou,
    box_iou,
    chamfer,
    direction_cosine_mismatch,
    directed_hausdorff,
    discrete_frechet,
    pairwise_box_giou,
    pairwise_box_iou,
    pairwise_chamfer,
    pairwise_frechet,
    paired_chamfer,
    paired_frechet,
    polyline_length,
    resample_polyline,
)

from oracles import frechet_by_enumeration, monotone_couplings


def polylines(max_points=8):
    return st.integers(1, max_points).flatmap(
        lambda n: arrays(np.float64, (n, 3), elements=st.floats(-20, 20, allow_nan=False)))


def test_coupling_enumeration_counts():
    # Delannoy numbers D(m-1, n-1)
    assert sum(1 for _ in monotone_couplings(2, 2)) == 3
    assert sum(1 for _ in monotone_couplings(3, 3)) == 13
    assert sum(1 for _ in monotone_couplings(4, 3)) == 25


def test_frechet_examples():
    a = [[0, 0, 0], [1, 0, 0]]
    assert discrete_frechet(a, a) == 0.0
    assert discrete_frechet(a, [[0, 1, 0], [1, 1, 0]]) == 1.0
    b = [[0, 0, 0], [1, 1, 0], [2, 0, 0]]
    got = discrete_frechet([[0, 0, 0], [2, 0, 0]], b)
    assert got == pytest.approx(frechet_by_enumeration([[0, 0, 0], [2, 0, 0]], b), abs=1e-12)
    assert got == pytest.approx(math.sqrt(2), abs=1e-12)


def test_frechet_rejects_empty():
    with pytest.raises(ValueError):
        discrete_frechet(np.zeros((0, 3)), [[0, 0, 0]])


@settings(max_examples=150, deadline=None)
@given(polylines(), polylines())
def test_frechet_matches_enumeration(a, b):
    assert discrete_frechet(a, b) == pytest.approx(frechet_by_enumeration(a, b), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(polylines(), polylines(), arrays(np.float64, 3, elements=st.floats(-10, 10)))
def test_symmetry_and_translation(a, b, t):
    assert discrete_frechet(a, b) == discrete_frechet(b, a)
    assert chamfer(a, b).symmetric == pytest.approx(chamfer(b, a).symmetric, abs=1e-12)
    assert discrete_frechet(a + t, b + t) == pytest.approx(discrete_frechet(a, b), abs=1e-9)
    assert chamfer(a + t, b + t).symmetric == pytest.approx(chamfer(a, b).symmetric, abs=1e-9)
    assert discrete_frechet(a, a + t) == pytest.approx(np.linalg.norm(t), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(polylines(), polylines())
def test_chamfer_hausdorff_frechet_chain(a, b):
    fwd = chamfer(a, b).forward
    h = directed_hausdorff(a, b)
    assert fwd <= h + 1e-12
    assert h <= discrete_frechet(a, b) + 1e-12


def test_chamfer_examples():
    z = chamfer([[1, 2, 3]], [[1, 2, 3]])
    assert (z.forward, z.backward, z.symmetric) == (0, 0, 0)
    r = chamfer([[0, 0, 0]], [[3, 4, 0]])
    assert (r.forward, r.backward, r.symmetric) == (5, 5, 5)
    r = chamfer([[0, 0, 0], [1, 0, 0]], [[0, 1, 0]])
    assert r.forward == pytest.approx((1 + math.sqrt(2)) / 2, abs=1e-12)
    assert r.backward == pytest.approx(1.0, abs=1e-12)
    assert r.symmetric == (r.forward + r.backward) / 2
    assert r.symmetric == pytest.approx(1.10355, abs=1e-5)


def test_chamfer_is_order_independent():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(7, 3)), rng.normal(size=(5, 3))
    r1 = chamfer(a, b)
    r2 = chamfer(a[::-1], rng.permutation(b))
    assert r1.forward == pytest.approx(r2.forward, abs=1e-12)
    assert r1.backward == pytest.approx(r2.backward, abs=1e-12)


def test_pairwise_agrees_with_scalar():
    rng = np.random.default_rng(7)
    A, B = rng.normal(size=(4, 11, 3)), rng.normal(size=(3, 11, 3))
    fre, cha = pairwise_frechet(A, B), pairwise_chamfer(A, B, chunk=2)
    for i in range(4):
        for j in range(3):
            assert fre[i, j] == pytest.approx(discrete_frechet(A[i], B[j]), abs=1e-12)
            assert cha[i, j] == pytest.approx(chamfer(A[i], B[j]).symmetric, abs=1e-12)


def test_planar_ignores_height():
    a = [[0, 0, 0], [1, 0, 0]]
    b = [[0, 0, 3], [1, 0, 3]]
    assert discrete_frechet(a, b) == 3.0
    assert discrete_frechet(a, b, planar=True) == 0.0


def test_resample_examples():
    out = resample_polyline([[0, 0, 0], [10, 0, 0]], 11)
    np.testing.assert_allclose(out[:, 0], np.arange(11), atol=1e-12)
    p = np.c_[np.linspace(0, 5, 6), np.zeros(6), np.zeros(6)]
    np.testing.assert_allclose(resample_polyline(p, 6), p, atol=1e-9)
    corner = resample_polyline([[0, 0, 0], [1, 0, 0], [1, 1, 0]], 3)
    np.testing.assert_allclose(corner, [[0, 0, 0], [1, 0, 0], [1, 1, 0]], atol=1e-12)


def test_resample_degenerate_warns():
    with pytest.warns(DegenerateGeometryWarning):
        out = resample_polyline([[2, 3, 4], [2, 3, 4]], 5)
    np.testing.assert_array_equal(out, np.tile([2, 3, 4], (5, 1)))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8).flatmap(lambda n: arrays(np.float64, (n, 3), elements=st.floats(-20, 20))),
       st.integers(2, 30))
def test_resample_spacing_is_even(p, n):
    assume(polyline_length(p) > 1e-3)
    out = resample_polyline(p, n)
    assert out.shape == (n, 3)
    np.testing.assert_array_equal(out[0], p[0])
    np.testing.assert_array_equal(out[-1], p[-1])
    # Points lie on the original line at equal arc-length positions; chord
    # spacing equals arc spacing whenever consecutive samples share a segment.
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    cum = np.concatenate([[0], np.cumsum(seg)])
    target = np.linspace(0, cum[-1], n)
    expect = np.stack([np.interp(target, cum, p[:, k]) for k in range(3)], axis=1)
    np.testing.assert_allclose(out, expect, atol=1e-6 * max(1.0, cum[-1]))


def test_box_examples():
    assert box_iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    assert box_giou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    assert box_iou((0, 0, 2, 2), (1, 0, 3, 2)) == pytest.approx(1 / 3, abs=1e-12)
    assert box_iou((0, 0, 1, 1), (2, 0, 3, 1)) == 0.0
    assert box_giou((0, 0, 1, 1), (2, 0, 3, 1)) == pytest.approx(-1 / 3, abs=1e-12)
    with pytest.raises(ValueError):
        box_iou((0, 0, 0, 1), (0, 0, 1, 1))


def boxes():
    return st.tuples(st.floats(0, 100), st.floats(0, 100), st.floats(0.5, 50), st.floats(0.5, 50)).map(
        lambda t: (t[0], t[1], t[0] + t[2], t[1] + t[3]))


@settings(max_examples=200, deadline=None)
@given(boxes(), boxes())
def test_iou_bounds(a, b):
    iou, giou = box_iou(a, b), box_giou(a, b)
    assert 0.0 <= iou <= 1.0
    assert -1.0 < giou <= iou + 1e-12
    assert pairwise_box_iou(np.array([a]), np.array([b]))[0, 0] == pytest.approx(iou, abs=1e-12)
    assert pairwise_box_giou(np.array([a]), np.array([b]))[0, 0] == pytest.approx(giou, abs=1e-12)


def test_nested_boxes_giou_equals_iou():
    assert box_giou((0, 0, 10, 10), (2, 2, 5, 5)) == pytest.approx(box_iou((0, 0, 10, 10), (2, 2, 5, 5)), abs=1e-15)


def test_direction_cosine_examples():
    g = np.array([[0, 0, 0], [1, 0, 0], [2, 1, 0], [2, 3, 0]], float)
    assert direction_cosine_mismatch(g, g) == pytest.approx(0.0, abs=1e-12)
    flipped = np.concatenate([g[:1], g[:1] - np.cumsum(np.diff(g, axis=0), axis=0)])
    assert direction_cosine_mismatch(flipped, g) == pytest.approx(2.0, abs=1e-12)
    rot = g @ np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 1]], float).T
    assert direction_cosine_mismatch(rot, g) == pytest.approx(1.0, abs=1e-12)


def test_direction_cosine_zero_edges():
    g = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float)
    p = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0]], float)
    value, degenerate = direction_cosine_mismatch(p, g, return_degenerate=True)
    assert degenerate == 1
    assert value == 0.0


def test_paired_equals_pairwise_diagonal():
    rng = np.random.default_rng(3)
    A, B = rng.normal(size=(6, 11, 3)), rng.normal(size=(6, 11, 3))
    np.testing.assert_array_equal(paired_frechet(A, B), np.diag(pairwise_frechet(A, B)))
    np.testing.assert_array_equal(paired_chamfer(A, B), np.diag(pairwise_chamfer(A, B)))
    with pytest.raises(ValueError):
        paired_frechet(A, B[:3])


@settings(max_examples=100, deadline=None)
@given(polylines(), polylines())
def test_box_gap_bounds_point_distances(a, b):
    gap = box_gap(a.min(0)[None], a.max(0)[None], b.min(0)[None], b.max(0)[None])[0, 0]
    nearest = np.linalg.norm(a[:, None] - b[None], axis=-1).min()
    assert gap <= nearest + 1e-9
    assert gap <= chamfer(a, b).symmetric + 1e-9
    assert gap <= discrete_frechet(a, b) + 1e-9
