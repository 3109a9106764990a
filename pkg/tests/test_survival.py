import math

import numpy as np
import pytest

from gwfractal.errors import ResourceGuardError, UnsupportedModelError
from gwfractal.geometry import Line, UNIT_SQUARE, chord_length, Square
from gwfractal.models import make_builtin, sample_chain
from gwfractal.quadrature import QuadratureRule
from gwfractal.rng import Stream
from gwfractal.survival import (expected_chord, expected_favard_exact,
                                expected_projection_length, line_statistics,
                                survival_probability)


def test_percolation_one_step_example():
    m = make_builtin("percolation")
    line = Line(0.0, 0.25)
    assert survival_probability(m, line, 1) == pytest.approx(0.75, abs=1e-15)
    e, cond = expected_chord(m, line, 1)
    assert e == pytest.approx(1.0, abs=1e-15)
    assert cond == pytest.approx(4 / 3, abs=1e-14)


@pytest.mark.parametrize("n", [0, 1, 5, 10])
def test_degenerate_direction_always_survives(n):
    m = make_builtin("column_degenerate", 2)
    st = line_statistics(m, math.pi / 2, np.linspace(-0.999, -0.001, 17), n)
    assert np.all(st.survival == 1.0)


def test_vertical_projection_of_degenerate_model_is_one():
    m = make_builtin("column_degenerate", 3)
    est = expected_projection_length(m, math.pi / 2, 6)
    assert est.value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("theta", [0.1, 0.7, math.pi / 2, 2.5])
def test_depth_zero_projection(theta):
    est = expected_projection_length(make_builtin("percolation"), theta, 0)
    assert est.value == pytest.approx(math.sin(theta) + abs(math.cos(theta)), abs=1e-6)


def test_survival_decreases_with_depth():
    m = make_builtin("percolation")
    ts = np.linspace(0.02, 0.98, 9)
    prev = np.ones_like(ts)
    for n in range(1, 9):
        cur = line_statistics(m, 0.3, ts - 0.3, n).survival
        assert np.all(cur <= prev + 1e-15)
        prev = cur


def test_expected_chord_is_a_martingale():
    # Uniform marginals keep E[L^n |line & S_n|] equal to the unit chord.
    m = make_builtin("uniform_choice", 2)
    theta = 0.9
    ts = np.linspace(-0.7, 0.5, 7)
    st = line_statistics(m, theta, ts, 6)
    ref = [chord_length(Line(theta, t), UNIT_SQUARE) for t in ts]
    assert np.allclose(st.expected_chord, ref, atol=1e-12)


def test_conditional_chord_grows_linearly():
    m = make_builtin("percolation")
    ts = np.array([0.3, 0.55])
    a = line_statistics(m, 0.4, ts, 8).conditional_chord / 8
    b = line_statistics(m, 0.4, ts, 16).conditional_chord / 16
    assert np.all(np.abs(a / b - 1) < 0.25)


def test_recursion_matches_simulation():
    m = make_builtin("percolation")
    theta, t, n = 0.6, 0.1, 4
    p, e = survival_probability(m, Line(theta, t), n), expected_chord(m, Line(theta, t), n)[0]
    hits, chords = [], []
    for r in range(4000):
        real = sample_chain(m, n, Stream(21).child(r))
        side = real.size(n)
        c = sum(chord_length(Line(theta, t), Square(x * side, y * side, side))
                for x, y in real.levels[n])
        hits.append(c > 0)
        chords.append(c / side)
    hits, chords = np.array(hits, float), np.array(chords)
    assert abs(hits.mean() - p) < 5 * hits.std() / math.sqrt(hits.size)
    assert abs(chords.mean() - e) < 5 * chords.std() / math.sqrt(chords.size)


def test_exact_favard_depth_zero_and_one():
    m = make_builtin("percolation")
    assert expected_favard_exact(m, 0, 128, 256).value == pytest.approx(4.0, abs=1e-3)
    # Depth one by enumerating all 16 outcomes of the four Bernoulli squares.
    from gwfractal.geometry import interval_union_measure, projection_interval
    thetas, w = QuadratureRule(512).angles()
    quarters = [Square(x / 2, y / 2, 0.5) for x in range(2) for y in range(2)]
    total = 0.0
    for mask in range(16):
        kept = [q for b, q in enumerate(quarters) if mask >> b & 1]
        if kept:
            lens = [interval_union_measure([list(projection_interval(th, q).intervals[0])
                                            for q in kept]) for th in thetas]
            total += float(np.dot(w, lens))
    assert expected_favard_exact(m, 1, 256, 512).value == pytest.approx(total / 16, abs=1e-3)


def test_exact_favard_decreases():
    m = make_builtin("uniform_choice", 2)
    vals = [expected_favard_exact(m, n, 32, 256).value for n in range(5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_discs_are_unsupported():
    with pytest.raises(UnsupportedModelError):
        survival_probability(make_builtin("vv_discs"), Line(0.3, 0.0), 2)


def test_cost_guard():
    with pytest.raises(ResourceGuardError):
        survival_probability(make_builtin("percolation"), Line(0.3, 0.0), 26)
