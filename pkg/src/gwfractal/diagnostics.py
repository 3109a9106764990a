"""Checks of the lower bound for degenerate models and of the tail bounds.

For sets with exactly one square per column the Favard length decays no
faster than ``log n / n``.  The argument rests on a count of well-separated
pairs of squares and on an ``L^2`` bound for the multiplicity function of
the projections in narrow angular bands; both are computed here so that
their scaling can be checked on samples.  The second half holds the
classical Hoeffding and Chernoff tail bounds together with an empirical
validator.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .asymptotics import w_set
from .errors import ParameterError
from .favard import FavardEstimate, pieces_projection_lengths, replicate_table
from .models import GridModel, Model, Realization, classify
from .quadrature import QuadratureRule, angle_sincos
from .rng import Stream
from .survival import require_grid


def is_one_per_column(realization: Realization, level: int | None = None) -> bool:
    k = realization.n if level is None else level
    cells = realization.levels[k]
    L = realization.model.L
    if cells.shape[0] != L**k:
        return False
    return bool(np.array_equal(np.sort(cells[:, 0]), np.arange(L**k)))


def bv_pair_count(realization: Realization, i: int, j: int, strict: bool = True) -> int:
    """Ordered pairs of deepest-level squares with ``|x - x'| <= L**-i`` and
    ``|y - y'| >= L**-j`` (lower-left corners).

    ``strict`` enforces the one-square-per-column precondition.
    """
    require_grid(realization.model)
    L, n = realization.model.L, realization.n
    if strict and not is_one_per_column(realization):
        raise ParameterError("the deepest level does not have one square per column")
    if i < 0 or j < 0:
        raise ParameterError("scales i, j must be non-negative")
    cells = realization.levels[n]
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    X = np.ascontiguousarray(cells[order, 0])
    Y = np.ascontiguousarray(cells[order, 1])
    # |dX| L^-n <= L^-i  and  |dY| L^-n >= L^-j, in exact integer arithmetic.
    xmax = L ** (n - i) if i <= n else 0
    if j <= n:
        ymin = L ** (n - j)
    else:
        ymin = 1  # any positive integer gap exceeds L**-j when j > n
    return int(_kernels.close_pair_count(X, Y, xmax, ymin))


@dataclass(frozen=True)
class Band:
    """Angles with ``tan(theta)`` between ``L**k`` and ``L**(k+1)``."""

    k: int
    L: int

    @property
    def interval(self) -> tuple[float, float]:
        return math.atan(float(self.L) ** self.k), math.atan(float(self.L) ** (self.k + 1))


def multiplicity_l2(realization: Realization, thetas, level: int | None = None) -> np.ndarray:
    """``||f_theta||_2^2`` for each angle, where ``f_theta`` counts the
    deepest-level squares whose projection covers a point."""
    require_grid(realization.model)
    k = realization.n if level is None else level
    cells = realization.levels[k]
    side = realization.model.rho**k
    s, c = angle_sincos(np.atleast_1d(np.asarray(thetas, dtype=float)))
    out = np.empty(s.size)
    for q in range(s.size):
        lo = side * (-cells[:, 0] * s[q] + cells[:, 1] * c[q])
        out[q] = _kernels.step_square_integral(np.sort(lo), side * (s[q] + abs(c[q])))
    return out


def band_l2(realization: Realization, band: Band, rule: QuadratureRule = QuadratureRule(64)) -> float:
    """Integral over the band of ``||f_theta||_2^2`` (midpoint rule in angle)."""
    a, b = band.interval
    h = (b - a) / rule.nodes
    th = a + (np.arange(rule.nodes) + 0.5) * h
    return float(h * np.sum(multiplicity_l2(realization, th)))


def pair_overlap_sum(realization: Realization, thetas) -> np.ndarray:
    """Brute-force ``sum over ordered pairs of |proj Q & proj Q'|`` per angle."""
    n = realization.n
    cells = realization.levels[n].astype(float)
    side = realization.model.rho**n
    s, c = angle_sincos(np.atleast_1d(np.asarray(thetas, dtype=float)))
    out = np.empty(s.size)
    for q in range(s.size):
        lo = side * (-cells[:, 0] * s[q] + cells[:, 1] * c[q])
        hi = lo + side * (s[q] + abs(c[q]))
        ov = np.minimum(hi[:, None], hi[None, :]) - np.maximum(lo[:, None], lo[None, :])
        out[q] = float(np.sum(np.clip(ov, 0.0, None)))
    return out


@dataclass(frozen=True)
class BVReport:
    ns: np.ndarray
    scaled: np.ndarray
    median: float
    ok: bool


def bv_lower_bound_check(model: Model, estimates: Sequence[FavardEstimate],
                         ns: Sequence[int] = tuple(range(8, 15))) -> BVReport:
    """``mu_n * n / log n`` must stay within a factor 3 of its median."""
    if not isinstance(model, GridModel) or not classify(model).is_degenerate:
        raise ParameterError("the logarithmic lower bound concerns degenerate models")
    by_n = {e.n: e for e in estimates}
    missing = [n for n in ns if n not in by_n]
    if missing:
        raise ParameterError(f"estimates missing for n = {missing}")
    scaled = np.array([by_n[n].mean * n / math.log(n) for n in ns])
    med = float(np.median(scaled))
    ok = bool(np.all((scaled >= med / 3) & (scaled <= 3 * med)))
    return BVReport(np.asarray(ns), scaled, med, ok)


# --- tail bounds ---------------------------------------------------------


@dataclass(frozen=True)
class ConcentrationBound:
    kind: str
    params: dict
    epsilon: float
    bound: float


KINDS = ("hoeffding", "chernoff", "chernoff_negdep")


def concentration_bound(kind: str, params: dict, epsilon: float) -> ConcentrationBound:
    """Closed-form tail bounds, clamped to ``[0, 1]``.

    * ``hoeffding``: ``params["ranges"]`` lists ``(a_i, b_i)``.  Bounds
      ``P[|X - EX| >= eps * R]`` by ``2 exp(-2 eps^2 R^2 / sum (b_i - a_i)^2)``
      with ``R = sum (b_i - a_i)``.
    * ``chernoff``: ``params["mean"]``.  Bounds ``P[|X - EX| >= eps EX]`` by
      ``2 exp(-eps^2 EX / 4)`` for sums of independent indicators.
    * ``chernoff_negdep``: ``params["mean"]``.  Bounds the lower tail
      ``P[X <= (1 - eps) EX]`` by ``exp(-eps^2 EX / 2)`` for negatively
      correlated indicators.
    """
    if not (0.0 <= epsilon <= 1.0):
        raise ParameterError(f"epsilon={epsilon!r} outside [0, 1]")
    if kind == "hoeffding":
        ranges = np.asarray(params.get("ranges", ()), dtype=float).reshape(-1, 2)
        widths = ranges[:, 1] - ranges[:, 0]
        if widths.size == 0 or np.any(widths < 0) or not np.any(widths > 0):
            raise ParameterError("hoeffding needs ranges a_i <= b_i with positive total width")
        expo = 2 * epsilon**2 * widths.sum() ** 2 / np.sum(widths**2)
        value = 2 * math.exp(-expo)
    elif kind in ("chernoff", "chernoff_negdep"):
        mean = params.get("mean")
        if not isinstance(mean, (int, float)) or mean < 0:
            raise ParameterError("chernoff bounds need a non-negative mean")
        if kind == "chernoff":
            value = 2 * math.exp(-0.25 * epsilon**2 * mean)
        else:
            value = math.exp(-0.5 * epsilon**2 * mean)
    else:
        raise ParameterError(f"unknown bound kind {kind!r}; choose from {KINDS}")
    return ConcentrationBound(kind, dict(params), float(epsilon), min(1.0, value))


@dataclass(frozen=True)
class Sampler:
    """A random variable with a known mean and the parameters of its bound."""

    name: str
    kind: str
    params: dict
    mean: float
    draw: Callable[[np.random.Generator, int], np.ndarray]

    def deviates(self, x: np.ndarray, eps: float) -> np.ndarray:
        if self.kind == "hoeffding":
            widths = np.diff(np.asarray(self.params["ranges"], float), axis=1)
            return np.abs(x - self.mean) >= eps * widths.sum()
        if self.kind == "chernoff":
            return np.abs(x - self.mean) >= eps * self.mean
        return x <= (1 - eps) * self.mean


def bernoulli_sum_sampler(n: int = 100, p: float = 0.5, kind: str = "hoeffding") -> Sampler:
    params = {"ranges": [(0.0, 1.0)] * n} if kind == "hoeffding" else {"mean": n * p}
    return Sampler(f"bernoulli_sum_n{n}_p{p}", kind, params, n * p,
                   lambda g, size: g.binomial(n, p, size=size).astype(float))


def pattern_count_sampler(L: int = 2, k: int = 1, n: int = 1602, batch: int = 2000) -> Sampler:
    """Occurrences of the thin-rectangle words in an i.i.d. uniform address.

    The indicators of overlapping windows are negatively correlated, since a
    word of the set cannot start inside another occurrence.
    """
    words = w_set(L, k)
    m = k + 2
    p = len(words) / float(L) ** (2 * m)
    mean = (n - m + 1) * p

    def draw(g: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty(size)
        for start in range(0, size, batch):
            rows = min(batch, size - start)
            i = g.integers(1, L + 1, size=(rows, n), dtype=np.int8)
            j = g.integers(1, L + 1, size=(rows, n), dtype=np.int8)
            span = n - m + 1
            hit = (i[:, :span] == 1) & (j[:, :span] == 1)
            hit &= (i[:, 1:span + 1] == L) & (j[:, 1:span + 1] == 1)
            for r in range(2, m):
                hit &= i[:, r:span + r] == L
            out[start:start + rows] = hit.sum(axis=1)
        return out

    return Sampler(f"w_pattern_count_L{L}_k{k}_n{n}", "chernoff_negdep",
                   {"mean": mean}, mean, draw)


@dataclass(frozen=True)
class EmpiricalReport:
    sampler: str
    kind: str
    epsilon: float
    bound: float
    frequency: float
    trials: int

    @property
    def ok(self) -> bool:
        return self.frequency <= self.bound


def validate_empirically(sampler: Sampler, epsilon: float, trials: int,
                         stream: Stream) -> EmpiricalReport:
    b = concentration_bound(sampler.kind, sampler.params, epsilon)
    g = stream.child(sampler.name).generator()
    x = sampler.draw(g, trials)
    freq = float(np.mean(sampler.deviates(x, epsilon)))
    return EmpiricalReport(sampler.name, sampler.kind, epsilon, b.bound, freq, trials)


def standard_battery() -> list[tuple[Sampler, float]]:
    hoeff = bernoulli_sum_sampler(100, 0.5, "hoeffding")
    chern = bernoulli_sum_sampler(100, 0.5, "chernoff")
    negdep = pattern_count_sampler()
    return ([(hoeff, e) for e in (0.05, 0.1, 0.15, 0.2)]
            + [(chern, e) for e in (0.2, 0.3, 0.4, 0.6)]
            + [(negdep, e) for e in (0.2, 0.3, 0.4, 0.6)])


# --- almost-sure comparison -----------------------------------------------


def lag(n: int, rho: float) -> int:
    """``floor(4 log_{1/rho} n)``."""
    return int(math.floor(4 * math.log(n) / math.log(1 / rho) + 1e-12))


@dataclass(frozen=True)
class AsLimitReport:
    n: int
    m_formula: int
    m_used: int
    values: np.ndarray
    fraction_within: float


def as_limit_check(model: Model, n: int, chains: int, stream: Stream,
                   reference: Sequence[FavardEstimate] | None = None,
                   m_override: int | None = None, reference_replicates: int = 1000,
                   rule: QuadratureRule = QuadratureRule(256),
                   workers: int = 1) -> AsLimitReport:
    """Per chain ``Fav(S_n) / mu_{n-m} - Z_m``; summary is the fraction ``<= 0.3``.

    The lag from the almost-sure comparison is usually too large for
    feasible depths, so ``m_override`` (at most that lag) may replace it.
    """
    m_th = lag(n, model.rho)
    m = m_th if m_override is None else int(m_override)
    if m_override is not None and not 0 <= m <= m_th:
        raise ParameterError(f"override {m} must lie in [0, {m_th}]")
    if n - m < 1:
        raise ParameterError(f"n - m = {n - m} < 1: choose a larger n or a smaller override")
    if reference is None:
        reference = replicate_table(model, n - m, reference_replicates, rule,
                                    stream.child("reference"), workers).estimates()
    by_n = {e.n: e.mean for e in reference}
    if n - m not in by_n:
        raise ParameterError(f"reference table does not cover n - m = {n - m}")
    chain_tab = replicate_table(model, n, chains, rule, stream.child("chains"), workers)
    fav = chain_tab.favard[:, n]
    values = fav / by_n[n - m] - chain_tab.z[:, m]
    return AsLimitReport(n, m_th, m, values, float(np.mean(values <= 0.3)))
