"""Exact expectations along lines through the recursive construction.

For a fixed line the probability that it meets ``S_n`` obeys a top-down
recursion: descend into every child square the line meets, and combine the
children's survival probabilities through the offspring law.  The expected
scaled chord ``E[L^n |line & S_n|]`` follows the same tree with the
inclusion probabilities as weights.  Integrating the survival probability
over offsets gives the expected projection length; integrating again over
angles gives the expected Favard length, with no sampling involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ResourceGuardError, UnsupportedModelError
from .geometry import Line, sincos
from .models import GridModel, Model, check_memory_guard
from .parallel import map_chunks
from .quadrature import QuadratureRule

COST_GUARD = 10_000_000


@dataclass(frozen=True)
class LineStatistics:
    survival: np.ndarray
    expected_chord: np.ndarray
    touches_boundary: np.ndarray
    squares_visited: int

    @property
    def conditional_chord(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.survival > 0, self.expected_chord / self.survival, 0.0)


@dataclass(frozen=True)
class Estimate:
    value: float
    error: float
    nodes: int


def require_grid(model: Model) -> GridModel:
    if not isinstance(model, GridModel):
        raise UnsupportedModelError(
            f"{model.model_id}: exact line recursions need a grid model"
        )
    return model


def line_cost(L: int, theta: float, n: int) -> float:
    """Upper bound on the squares of all levels a single line can meet."""
    s, c = sincos(theta)
    return sum(L**j * (s + abs(c)) + 2.0 for j in range(n + 1))


def _guard(model: GridModel, theta: float, n: int) -> None:
    check_memory_guard(model, n)
    cost = line_cost(model.L, theta, n)
    if cost > COST_GUARD:
        raise ResourceGuardError(
            f"a line at depth {n} may meet {cost:.3g} squares, above the guard of {COST_GUARD}"
        )


def line_statistics(model: Model, theta: float, ts, n: int,
                    want_survival: bool = True) -> LineStatistics:
    model = require_grid(model)
    _guard(model, theta, n)
    s, c = sincos(theta)
    ts = np.ascontiguousarray(np.atleast_1d(np.asarray(ts, dtype=float)))
    table, sizes = model.member_table
    kind = 0 if model.is_bernoulli else 1
    p = float(model.law.p) if model.is_bernoulli else 0.0
    probs = np.zeros(1) if model.is_bernoulli else model.atom_probs
    surv, ech, touched, nodes = _kernels.line_statistics(
        ts, int(n), int(model.L), s, c, kind, p, table, sizes, probs,
        model.marginals, bool(want_survival))
    if not want_survival:
        surv = np.full_like(ech, np.nan)
    return LineStatistics(surv, ech, touched, int(nodes))


def survival_probability(model: Model, line: Line, n: int) -> float:
    """``P[line meets S_n]`` with closed squares."""
    return float(line_statistics(model, line.theta, [line.t], n).survival[0])


def expected_chord(model: Model, line: Line, n: int) -> tuple[float, float]:
    """``E[L^n |line & S_n|]`` and the same expectation given ``line & S_n`` is non-empty."""
    st = line_statistics(model, line.theta, [line.t], n)
    return float(st.expected_chord[0]), float(st.conditional_chord[0])


def _offset_integral(model: GridModel, theta: float, n: int, rule: QuadratureRule) -> float:
    s, c = sincos(theta)
    x, w = rule.offsets(min(0.0, -s, c, c - s), max(0.0, -s, c, c - s))
    return float(np.dot(w, line_statistics(model, theta, x, n).survival))


def expected_projection_length(model: Model, theta: float, n: int,
                               rule: QuadratureRule = QuadratureRule(256),
                               tol: float = 1e-4, max_nodes: int = 1 << 16) -> Estimate:
    """``E|proj_theta S_n|`` by offset quadrature of the survival probability.

    The node count doubles until two successive values differ by less than
    ``tol`` (or ``max_nodes`` is reached).
    """
    model = require_grid(model)
    prev = _offset_integral(model, theta, n, rule)
    while True:
        rule = rule.refined()
        cur = _offset_integral(model, theta, n, rule)
        err = abs(cur - prev)
        if err < tol or rule.nodes >= max_nodes:
            return Estimate(cur, err, rule.nodes)
        prev = cur


def _angle_chunk(thetas, model, n, t_nodes):
    tr = QuadratureRule(t_nodes)
    return [_offset_integral(model, float(th), n, tr) for th in thetas]


def _double_integral(model: GridModel, n: int, theta_nodes: int, t_nodes: int,
                     workers: int = 1) -> float:
    thetas, wt = QuadratureRule(theta_nodes).angles()
    parts = map_chunks(_angle_chunk, list(thetas), workers, (model, n, t_nodes))
    vals = [v for p in parts for v in p]
    return math.fsum(float(w) * v for w, v in zip(wt, vals))


def expected_favard_exact(model: Model, n: int, theta_nodes: int = 128,
                          t_nodes: int = 1024, workers: int = 1) -> Estimate:
    """``E Fav(S_n)`` by double quadrature of survival probabilities.

    The error is the change against a run with half the nodes in both
    directions.
    """
    model = require_grid(model)
    fine = _double_integral(model, n, theta_nodes, t_nodes, workers)
    coarse = _double_integral(model, n, max(1, theta_nodes // 2), max(1, t_nodes // 2), workers)
    return Estimate(fine, abs(fine - coarse), theta_nodes * t_nodes)
