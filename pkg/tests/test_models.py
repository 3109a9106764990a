import json
import math

import numpy as np
import pytest

from gwfractal.errors import ModelInvalidError, ParameterError, ResourceGuardError
from gwfractal.models import (BernoulliLaw, DiscModel, ExplicitLaw, GridModel, classify,
                              load_model, make_builtin, model_from_dict, model_to_dict,
                              sample_chain, validate_model)
from gwfractal.rng import Stream


def test_percolation_classification():
    c = classify(make_builtin("percolation"))
    assert c.is_uniform and not c.is_degenerate and not c.is_ahlfors and not c.is_surviving
    assert c.rho == 0.5 and c.mean_offspring == pytest.approx(2.0)


def test_uniform_choice_has_all_pairs():
    m = make_builtin("uniform_choice", 2)
    assert len(m.law.atoms) == 6
    c = classify(m)
    assert c.is_uniform and c.is_ahlfors and c.is_surviving and not c.is_degenerate


def test_peres_solomyak():
    m = make_builtin("peres_solomyak")
    assert len(m.law.atoms) == 256
    c = classify(m)
    assert c.is_uniform and c.is_ahlfors and not c.is_degenerate


@pytest.mark.parametrize("L", [2, 3])
def test_degenerate_models(L):
    col = classify(make_builtin("column_degenerate", L))
    row = classify(make_builtin("row_degenerate", L))
    assert col.is_vertically_degenerate and not col.is_horizontally_degenerate
    assert row.is_horizontally_degenerate and not row.is_vertically_degenerate
    assert col.is_uniform and row.is_uniform
    assert len(make_builtin("column_degenerate", L).law.atoms) == L**L


def test_four_corner_is_deterministic_but_not_one_per_column():
    c = classify(make_builtin("four_corner"))
    assert c.is_deterministic and c.is_ahlfors and not c.is_uniform
    # Columns 1 and 4 each hold two squares.
    assert not c.is_vertically_degenerate and not c.is_horizontally_degenerate


def test_disc_models():
    m = make_builtin("vv_discs")
    assert isinstance(m, DiscModel) and m.diameter == 2.0
    assert classify(m).is_ahlfors
    r = make_builtin("vv_discs_random")
    assert r.mean_offspring() == pytest.approx(3.0)
    assert not classify(r).is_surviving


def test_subcritical_model_rejected():
    with pytest.raises(ModelInvalidError, match="not critical"):
        validate_model(GridModel(2, BernoulliLaw(0.3)))


def test_every_defect_is_reported():
    bad = {"L": 2, "law": {"type": "explicit", "atoms": [
        {"squares": [[1, 1], [3, 1]], "prob": 0.5},
        {"squares": [[1, 1], [1, 1]], "prob": 0.6}]}}
    with pytest.raises(ModelInvalidError) as exc:
        model_from_dict(bad)
    msg = str(exc.value)
    assert "outside" in msg and "twice" in msg and "sum to" in msg


def test_round_trip_through_json(tmp_path):
    m = make_builtin("uniform_choice", 2)
    path = tmp_path / "uc.json"
    path.write_text(json.dumps(model_to_dict(m)))
    back = load_model(path)
    assert back.law == m.law and back.L == 2 and back.model_id == "uc_L2"


def test_bad_builtin_requests():
    with pytest.raises(ParameterError):
        make_builtin("nope")
    with pytest.raises(ParameterError):
        make_builtin("peres_solomyak", 3)
    with pytest.raises(ParameterError):
        make_builtin("percolation", 1)


def test_marginals_and_pair_probabilities():
    m = make_builtin("uniform_choice", 2)
    assert np.allclose(m.marginals, 0.5)
    pp = m.pair_probs
    assert np.allclose(np.diag(pp), 0.5)
    off = pp[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 1 / 6)


def test_memory_guard():
    with pytest.raises(ResourceGuardError):
        sample_chain(make_builtin("percolation"), 27, Stream(0))
    with pytest.raises(ResourceGuardError):
        sample_chain(make_builtin("peres_solomyak"), 14, Stream(0))


def test_sampling_is_reproducible():
    m = make_builtin("percolation")
    a = sample_chain(m, 8, Stream(5).child(1))
    b = sample_chain(m, 8, Stream(5).child(1))
    assert all(np.array_equal(x, y) for x, y in zip(a.levels, b.levels))


def test_children_nest_in_parents():
    m = make_builtin("uniform_choice", 3)
    r = sample_chain(m, 5, Stream(2))
    for k in range(1, 6):
        parents = {tuple(p) for p in r.levels[k - 1]}
        assert all((x // 3, y // 3) in parents for x, y in r.levels[k])
        assert len({tuple(c) for c in r.levels[k]}) == r.count(k)


def test_degenerate_samples_have_one_square_per_column():
    m = make_builtin("column_degenerate", 3)
    for rep in range(20):
        r = sample_chain(m, 4, Stream(9).child(rep))
        xs = r.levels[4][:, 0]
        assert sorted(xs.tolist()) == list(range(81))


def test_percolation_mean_count():
    m = make_builtin("percolation")
    counts = np.array([sample_chain(m, 8, Stream(4).child(r)).count(8) for r in range(1000)])
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - 256) < 5 * se


def test_inclusion_frequencies_are_uniform():
    m = make_builtin("uniform_choice", 2)
    hits = np.zeros((2, 2))
    n = 4000
    for r in range(n):
        for x, y in sample_chain(m, 1, Stream(8).child(r)).levels[1]:
            hits[x, y] += 1
    assert np.all(np.abs(hits / n - 0.5) < 5 * math.sqrt(0.25 / n))


def test_ahlfors_z_is_one():
    r = sample_chain(make_builtin("peres_solomyak"), 5, Stream(1))
    assert np.allclose(r.z_trace, 1.0)


def test_disc_children_are_disjoint_and_inside():
    m = make_builtin("vv_discs", 3)
    r = sample_chain(m, 4, Stream(3))
    for k in range(1, 5):
        rad = m.rho**k
        c = r.levels[k]
        d = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
        np.fill_diagonal(d, np.inf)
        assert d.min() >= 2 * rad - 1e-12
        par = r.levels[k - 1]
        dp = np.hypot(c[:, None, 0] - par[None, :, 0], c[:, None, 1] - par[None, :, 1]).min(axis=1)
        assert np.all(dp + rad <= m.rho ** (k - 1) + 1e-12)


def test_explicit_law_must_be_critical():
    law = ExplicitLaw((((1, 1),), ((1, 1), (2, 2))), (0.5, 0.5))
    with pytest.raises(ModelInvalidError):
        validate_model(GridModel(2, law))
