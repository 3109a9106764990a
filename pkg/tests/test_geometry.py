import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from gwfractal.errors import ParameterError
from gwfractal.geometry import (Disc, IntervalSet, Line, Square, UNIT_SQUARE, address_to_cell,
                                cell_to_address, chord_length, chord_profile,
                                interval_union_measure, pair_chord_integral,
                                projection_interval, scaled_pair_integral_and_err)
from gwfractal import _kernels

SQRT2 = math.sqrt(2.0)


def corner_projections(theta, q):
    s, c = math.sin(theta), math.cos(theta)
    return sorted(-x * s + y * c for x, y in q.corners)


def quad_pair(theta, a, b):
    pts = sorted(set(corner_projections(theta, a) + corner_projections(theta, b)))
    lo, hi = pts[0], pts[-1]
    f = lambda t: chord_length(Line(theta, t), a) * chord_length(Line(theta, t), b)
    val, _ = quad(f, lo, hi, points=pts[1:-1], epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


@pytest.mark.parametrize("theta, expected", [
    (0.0, (0.0, 1.0)),
    (math.pi / 2, (-1.0, 0.0)),
    (math.pi / 4, (-SQRT2 / 2, SQRT2 / 2)),
])
def test_projection_of_unit_square(theta, expected):
    iv = projection_interval(theta, UNIT_SQUARE)
    assert len(iv) == 1
    assert iv.lo == pytest.approx(expected[0], abs=1e-15)
    assert iv.hi == pytest.approx(expected[1], abs=1e-15)


def test_projection_of_disc():
    iv = projection_interval(math.pi / 2, Disc(0.5, 0.5, 0.5))
    assert (iv.lo, iv.hi) == pytest.approx((-1.0, 0.0))


def test_chord_examples():
    assert chord_length(Line(0.0, 0.3), UNIT_SQUARE) == pytest.approx(1.0, abs=1e-15)
    assert chord_length(Line(math.pi / 4, 0.0), UNIT_SQUARE) == pytest.approx(SQRT2, abs=1e-15)
    assert chord_length(Line(math.pi / 2, -0.5), Disc(0.5, 0.5, 0.5)) == pytest.approx(1.0)
    assert chord_length(Line(0.3, 5.0), UNIT_SQUARE) == 0.0


def test_closed_squares_at_edges():
    # The bottom edge y = 0 lies on the line t = 0 at theta = 0.
    assert chord_length(Line(0.0, 0.0), UNIT_SQUARE) == 1.0
    assert chord_length(Line(0.0, 1.0), UNIT_SQUARE) == 1.0


def test_profile_plateau():
    p = chord_profile(math.atan(0.5), UNIT_SQUARE)
    assert p.values.max() == pytest.approx(math.sqrt(5) / 2, abs=1e-14)


def test_profile_at_axis_angle_is_a_box():
    p = chord_profile(0.0, Square(0.25, 0.5, 0.25))
    assert p.breakpoints.tolist() == [0.5, 0.75]
    assert p.values.tolist() == [0.25, 0.25]


def test_union_examples():
    assert interval_union_measure([[0, 1], [0.5, 2], [3, 3]]) == pytest.approx(2.0)
    assert interval_union_measure([[0, 1]], fatten=0.1) == pytest.approx(1.2)
    assert interval_union_measure([]) == 0.0
    assert IntervalSet([(0, 1), (0.5, 2), (3, 3)]).measure == pytest.approx(2.0)


def test_pair_integral_examples():
    assert pair_chord_integral(math.pi / 4, UNIT_SQUARE, UNIT_SQUARE) == pytest.approx(
        2 * SQRT2 / 3, abs=1e-10)
    left = Square.from_address([(1, 1)], 2)
    right = Square.from_address([(2, 1)], 2)
    assert pair_chord_integral(0.0, left, right) == pytest.approx(1 / 8, abs=1e-15)


def test_scaled_pair_and_err_examples():
    v, e = scaled_pair_integral_and_err(0.0, [(1, 1)], [(2, 1)], 2)
    assert (v, e) == pytest.approx((0.5, 0.0), abs=1e-14)
    v, e = scaled_pair_integral_and_err(0.0, [(1, 1)], [(2, 2)], 2)
    assert (v, e) == pytest.approx((0.0, 0.0), abs=1e-14)


def test_err_bounded_by_lipschitz_constant():
    theta = math.pi / 4
    v, e = scaled_pair_integral_and_err(theta, [(1, 1), (1, 1)], [(2, 2)], 2)
    lip = 1 / (math.sin(theta) * math.cos(theta))
    width = 0.25 * (math.sin(theta) + math.cos(theta))
    assert 0 < e <= lip * width


def test_addresses_round_trip():
    addr = ((1, 2), (2, 1), (2, 2))
    X, Y = address_to_cell(addr, 2)
    assert (X, Y) == (0b011, 0b101)
    assert cell_to_address(X, Y, 3, 2) == addr
    q = Square.from_address(addr, 2)
    assert (q.x, q.y, q.side) == (3 / 8, 5 / 8, 1 / 8)


def test_bad_inputs():
    with pytest.raises(ParameterError):
        projection_interval(4.0, UNIT_SQUARE)
    with pytest.raises(ParameterError):
        Square(0, 0, 0)
    with pytest.raises(ParameterError):
        address_to_cell([(3, 1)], 2)


def random_square(rng, max_side=1.0):
    s = rng.uniform(1e-3, max_side)
    return Square(rng.uniform(-1, 1), rng.uniform(-1, 1), s)


def test_profile_integral_is_area():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10_000):
        q = random_square(rng)
        th = rng.uniform(0, math.pi)
        worst = max(worst, abs(chord_profile(th, q).integral() - q.side**2))
    assert worst < 1e-12


def test_profile_matches_direct_clipping():
    rng = np.random.default_rng(2)
    for _ in range(500):
        q = random_square(rng)
        th = rng.uniform(0, math.pi)
        p = chord_profile(th, q)
        a, b = p.support
        for t in rng.uniform(a - 0.1, b + 0.1, size=5):
            assert p(t) == pytest.approx(chord_length(Line(th, t), q), abs=1e-12)


def test_pair_integral_against_quadrature_sample():
    rng = np.random.default_rng(3)
    for _ in range(100):
        th = rng.uniform(0, math.pi)
        a = Square(rng.uniform(0, 0.5), rng.uniform(0, 0.5), rng.uniform(0.05, 0.5))
        b = Square(rng.uniform(0, 0.5), rng.uniform(0, 0.5), rng.uniform(0.05, 0.5))
        assert abs(pair_chord_integral(th, a, b) - quad_pair(th, a, b)) < 1e-8


angles = st.floats(0.0, math.pi)
coords = st.floats(-2.0, 2.0)
sides = st.floats(1e-2, 1.0)


@settings(max_examples=300, deadline=None)
@given(angles, coords, coords, sides, coords, coords, sides)
def test_pair_integral_symmetric(th, x1, y1, s1, x2, y2, s2):
    a, b = Square(x1, y1, s1), Square(x2, y2, s2)
    assert pair_chord_integral(th, a, b) == pair_chord_integral(th, b, a)


@settings(max_examples=300, deadline=None)
@given(angles, coords, coords, sides, coords, coords, st.floats(0.1, 10.0))
def test_pair_integral_homothety(th, x1, y1, s1, dx, dy, lam):
    a = Square(x1, y1, s1)
    b = Square(x1 + dx * s1, y1 + dy * s1, s1)
    base = pair_chord_integral(th, a, b)
    scaled = pair_chord_integral(th, Square(lam * a.x, lam * a.y, lam * s1),
                                 Square(lam * b.x, lam * b.y, lam * s1))
    assert scaled == pytest.approx(lam**3 * base, rel=1e-9, abs=1e-12)


interval_lists = st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 2)), min_size=1, max_size=30)


@settings(max_examples=300, deadline=None)
@given(interval_lists, st.floats(0, 1), st.floats(0, 1))
def test_union_monotone_and_lipschitz_in_radius(ivs, r1, r2):
    arr = [(a, a + w) for a, w in ivs]
    lo, hi = sorted((r1, r2))
    m_lo, m_hi = interval_union_measure(arr, lo), interval_union_measure(arr, hi)
    assert m_lo <= m_hi + 1e-12
    assert m_hi - m_lo <= 2 * len(arr) * (hi - lo) + 1e-12


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=200), st.floats(1e-3, 1.0))
def test_equal_width_kernel_matches_sweep(starts, w):
    lo = np.array(starts)
    expected = interval_union_measure(np.column_stack([lo, lo + w]))
    assert _kernels.union_equal_width(lo, w) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_equal_width_kernel_sparse_fallback():
    lo = np.array([0.0, 1e6, 2e6])
    assert _kernels.union_equal_width(lo, 1.0) == pytest.approx(3.0)


def test_union_against_fine_grid():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a = rng.uniform(0, 10, 15)
        b = a + rng.uniform(0, 1, 15)
        grid = np.linspace(-1, 12, 130_001)
        covered = np.zeros_like(grid, dtype=bool)
        for x, y in zip(a, b):
            covered |= (grid >= x) & (grid <= y)
        approx = covered.mean() * 13
        assert interval_union_measure(np.column_stack([a, b])) == pytest.approx(approx, abs=2e-3)
