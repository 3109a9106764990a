import math

import numpy as np
import pytest

from gwfractal.favard import (convexity_check, favard_length, level_profiles,
                              mc_expected_favard, projection_length, ratio_trace,
                              replicate_table)
from gwfractal.geometry import Disc, Square, interval_union_measure, projection_interval
from gwfractal.models import make_builtin, sample_chain
from gwfractal.quadrature import QuadratureRule
from gwfractal.rng import Stream
from gwfractal.survival import expected_favard_exact


def brute_projection(real, theta, fatten=0.0, level=None):
    k = real.n if level is None else level
    size = real.size(k)
    ivs = []
    for x, y in real.levels[k]:
        shape = Square(x * size, y * size, size) if real.is_grid else Disc(x, y, size)
        iv = projection_interval(theta, shape)
        ivs.append((iv.lo, iv.hi))
    return interval_union_measure(ivs, fatten) if ivs else 0.0


def test_unit_square_values():
    real = sample_chain(make_builtin("percolation"), 0, Stream(0))
    assert projection_length(real, math.pi / 4) == pytest.approx(math.sqrt(2), abs=1e-14)
    assert favard_length(real, QuadratureRule(512)).value == pytest.approx(4.0, abs=1e-4)


def test_four_corner_level_one():
    real = sample_chain(make_builtin("four_corner"), 1, Stream(0))
    assert projection_length(real, 0.0) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("name", ["percolation", "uniform_choice", "peres_solomyak", "vv_discs"])
def test_projection_matches_interval_union(name):
    m = make_builtin(name)
    rng = np.random.default_rng(6)
    for rep in range(10):
        real = sample_chain(m, 4, Stream(13).child(rep))
        for th in rng.uniform(0, math.pi, 4):
            r = rng.uniform(0, 0.05)
            assert projection_length(real, th, r) == pytest.approx(
                brute_projection(real, th, r), rel=1e-10, abs=1e-13)


def test_fattening_is_monotone_and_sandwiches():
    m = make_builtin("uniform_choice", 2)
    real = sample_chain(m, 8, Stream(2))
    for th in np.linspace(0.05, 3.1, 9):
        base = projection_length(real, th)
        prev = base
        for r in [1e-4, 1e-3, 1e-2]:
            cur = projection_length(real, th, r)
            assert prev <= cur + 1e-15
            assert cur <= base + 2 * r * real.count(8) + 1e-12
            prev = cur
        # Level n sits inside level n-1, so coarser levels project longer.
        assert base <= projection_length(real, th, level=7) + 1e-15


def test_subadditivity_over_random_splits():
    m = make_builtin("percolation")
    real = sample_chain(m, 8, Stream(1).child(3))
    assert real.count(8) > 1
    rng = np.random.default_rng(7)
    th = QuadratureRule(64).angles()[0]
    whole = level_profiles(real, th)[8]
    for _ in range(100):
        mask = rng.random(real.count(8)) < 0.5
        parts = []
        for sel in (mask, ~mask):
            sub = type(real)(m, real.levels[:8] + [real.levels[8][sel]], real.z_trace)
            parts.append(level_profiles(sub, th)[8])
        assert np.all(whole <= parts[0] + parts[1] + 1e-12)


def test_angle_refinement_is_stable():
    m = make_builtin("uniform_choice", 2)
    for n in (6, 12):
        real = sample_chain(m, n, Stream(3))
        est = favard_length(real, QuadratureRule(256))
        assert est.error / est.value < 5e-3


def test_extinct_chains_contribute_zero_unless_conditioned():
    m = make_builtin("percolation")
    table = replicate_table(m, 6, 200, QuadratureRule(32), Stream(4))
    fav = table.favard[:, 6]
    extinct = table.z[:, 6] == 0
    assert extinct.any()
    assert np.all(fav[extinct] == 0)
    cond = replicate_table(m, 6, 50, QuadratureRule(32), Stream(4), condition_on_survival=True)
    assert np.all(cond.favard[:, 6] > 0)


def test_parallel_table_is_identical():
    m = make_builtin("uniform_choice", 2)
    a = replicate_table(m, 5, 24, QuadratureRule(32), Stream(8), workers=1)
    b = replicate_table(m, 5, 24, QuadratureRule(32), Stream(8), workers=3)
    assert np.array_equal(a.profiles, b.profiles)


def test_monte_carlo_agrees_with_exact_expectation():
    m = make_builtin("percolation")
    mc = mc_expected_favard(m, 3, 3000, QuadratureRule(64), Stream(12))
    exact = expected_favard_exact(m, 3, 64, 512).value
    assert abs(mc.mean - exact) < 5 * mc.stderr


def test_deterministic_model_is_exactly_convex():
    m = make_builtin("four_corner")
    table = replicate_table(m, 5, 1, QuadratureRule(128), Stream(0))
    rep = convexity_check(table.estimates())
    assert rep.passed
    assert np.all(rep.integrated_tolerance == 1e-12)


def test_convexity_flags_a_concave_sequence():
    m = make_builtin("four_corner")
    est = replicate_table(m, 3, 1, QuadratureRule(16), Stream(0)).estimates()
    flipped = [type(e)(e.n, -e.mean, 0.0, 1, 16, -e.per_theta_mean, e.per_theta_stderr)
               for e in est]
    assert not convexity_check(flipped).passed


def test_ratio_trace_on_ahlfors_chain():
    m = make_builtin("uniform_choice", 2)
    real = sample_chain(m, 4, Stream(1))
    rule = QuadratureRule(64)
    refs = {n: 1.0 for n in range(1, 5)}
    tr = ratio_trace(real, refs, rule)
    assert [r.n for r in tr.records] == [1, 2, 3, 4]
    assert tr.ratios()[2] == pytest.approx(favard_length(real, rule, level=3).value)
    assert all(r.z_n == 1.0 for r in tr.records)
