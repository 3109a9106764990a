"""Projection and Favard length of sampled approximations.

The Favard length of a planar set is the integral over ``theta`` in
``[0, pi]`` of the length of its projection.  For a realization level made
of equal squares (or equal discs) every projection is a union of intervals
of a common width, measured by a compiled bin sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import ParameterError, ResourceGuardError
from .models import GridModel, Model, Realization, sample_chain
from .parallel import map_chunks
from .quadrature import QuadratureRule, angle_sincos
from .survival import Estimate

MAX_SURVIVAL_RETRIES = 10_000


def pieces_projection_lengths(model: Model, pieces: np.ndarray, k: int, thetas,
                              fatten: float = 0.0) -> np.ndarray:
    """Projection lengths of level-``k`` pieces (cells or disc centres)."""
    if fatten < 0:
        raise ParameterError("fatten radius must be non-negative")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    s, c = angle_sincos(thetas)
    if pieces.shape[0] == 0:
        return np.zeros(thetas.size)
    size = model.rho**k
    if isinstance(model, GridModel):
        X = np.ascontiguousarray(pieces[:, 0], dtype=np.float64)
        Y = np.ascontiguousarray(pieces[:, 1], dtype=np.float64)
        return _kernels.square_projection_lengths(X, Y, size, s, c, float(fatten))
    return _kernels.disc_projection_lengths(
        np.ascontiguousarray(pieces[:, 0]), np.ascontiguousarray(pieces[:, 1]),
        size, s, c, float(fatten))


def projection_length(realization: Realization, theta: float, fatten: float = 0.0,
                      level: int | None = None) -> float:
    """``|proj_theta|`` of a level (default: the deepest) fattened by ``fatten``."""
    k = realization.n if level is None else level
    return float(pieces_projection_lengths(
        realization.model, realization.levels[k], k, [theta], fatten)[0])


def favard_length(realization: Realization, rule: QuadratureRule = QuadratureRule(256),
                  fatten: float = 0.0, level: int | None = None) -> Estimate:
    """Midpoint quadrature over angles; the error compares against half the nodes."""
    k = realization.n if level is None else level
    th, w = rule.angles()
    lens = pieces_projection_lengths(realization.model, realization.levels[k], k, th, fatten)
    fine = float(np.dot(w, lens))
    if rule.nodes % 2 == 0:
        # Midpoints of the half-size rule are not nested, so evaluate them.
        th2, w2 = QuadratureRule(rule.nodes // 2).angles()
        coarse = float(np.dot(w2, pieces_projection_lengths(
            realization.model, realization.levels[k], k, th2, fatten)))
        err = abs(fine - coarse)
    else:
        err = math.nan
    return Estimate(fine, err, rule.nodes)


def level_profiles(realization: Realization, thetas) -> np.ndarray:
    """Projection lengths for every level: shape ``(n + 1, len(thetas))``."""
    return np.stack([pieces_projection_lengths(realization.model, lv, k, thetas)
                     for k, lv in enumerate(realization.levels)])


@dataclass(frozen=True)
class FavardEstimate:
    n: int
    mean: float
    stderr: float
    replicates: int
    theta_nodes: int
    per_theta_mean: np.ndarray = field(repr=False)
    per_theta_stderr: np.ndarray = field(repr=False)
    mean_z: float = math.nan


def _stderr(x: np.ndarray, axis: int = 0) -> np.ndarray:
    r = x.shape[axis]
    if r < 2:
        return np.zeros(np.delete(x.shape, axis)) if x.ndim > 1 else np.float64(0.0)
    return np.std(x, axis=axis, ddof=1) / math.sqrt(r)


def _sample_surviving(model: Model, n: int, stream, replicate: int) -> Realization:
    real = sample_chain(model, n, stream.child(replicate))
    attempt = 0
    while real.extinct:
        attempt += 1
        if attempt > MAX_SURVIVAL_RETRIES:
            raise ResourceGuardError(
                f"no surviving chain to depth {n} after {MAX_SURVIVAL_RETRIES} attempts")
        real = sample_chain(model, n, stream.child(replicate, "retry", attempt))
    return real


def _replicate_chunk(reps: Sequence[int], model: Model, n_max: int, nodes: int,
                     stream, condition: bool):
    th, _ = QuadratureRule(nodes).angles()
    prof = np.empty((len(reps), n_max + 1, nodes))
    z = np.empty((len(reps), n_max + 1))
    for row, r in enumerate(reps):
        if condition:
            real = _sample_surviving(model, n_max, stream, r)
        else:
            real = sample_chain(model, n_max, stream.child(r))
        prof[row] = level_profiles(real, th)
        z[row] = real.z_trace
    return prof, z


@dataclass(frozen=True)
class ReplicateTable:
    """Per-replicate projection lengths ``(R, n + 1, M)`` and ``Z`` traces."""

    profiles: np.ndarray
    z: np.ndarray
    theta_nodes: int

    @property
    def favard(self) -> np.ndarray:
        return self.profiles.sum(axis=2) * (math.pi / self.theta_nodes)

    def estimate(self, n: int) -> FavardEstimate:
        fav = self.favard[:, n]
        prof = self.profiles[:, n, :]
        return FavardEstimate(
            n=n,
            mean=float(np.mean(fav)),
            stderr=float(_stderr(fav)),
            replicates=fav.size,
            theta_nodes=self.theta_nodes,
            per_theta_mean=np.mean(prof, axis=0),
            per_theta_stderr=_stderr(prof, axis=0),
            mean_z=float(np.mean(self.z[:, n])),
        )

    def estimates(self) -> list[FavardEstimate]:
        return [self.estimate(n) for n in range(self.z.shape[1])]


def replicate_table(model: Model, n_max: int, replicates: int,
                    rule: QuadratureRule = QuadratureRule(256), stream=None,
                    workers: int = 1, condition_on_survival: bool = False) -> ReplicateTable:
    """Sample ``replicates`` chains to depth ``n_max`` and project every level.

    Replicate ``r`` draws from ``stream.child(r)``, so the table is the same
    for any number of workers.  Extinct chains contribute zero unless
    ``condition_on_survival`` asks for rejection sampling.
    """
    if stream is None:
        raise ParameterError("a random stream is required")
    if replicates < 1:
        raise ParameterError("need at least one replicate")
    parts = map_chunks(_replicate_chunk, list(range(replicates)), workers,
                       (model, n_max, rule.nodes, stream, condition_on_survival))
    prof = np.concatenate([p for p, _ in parts])
    z = np.concatenate([q for _, q in parts])
    return ReplicateTable(prof, z, rule.nodes)


def mc_expected_favard(model: Model, n: int, replicates: int,
                       rule: QuadratureRule = QuadratureRule(256), stream=None,
                       workers: int = 1, condition_on_survival: bool = False) -> FavardEstimate:
    table = replicate_table(model, n, replicates, rule, stream, workers, condition_on_survival)
    return table.estimate(n)


@dataclass(frozen=True)
class RatioRecord:
    n: int
    fav: float
    z_n: float
    ratio: float


@dataclass
class RatioTrace:
    chain_id: int
    records: list

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.records])


def ratio_trace(realization: Realization, reference_means: Mapping[int, float],
                rule: QuadratureRule = QuadratureRule(256), ns=None,
                chain_id: int = 0) -> RatioTrace:
    """``Fav(S_n) / E Fav(S_n)`` along one chain for the requested depths."""
    ns = range(1, realization.n + 1) if ns is None else ns
    th, w = rule.angles()
    recs = []
    for n in ns:
        if n > realization.n:
            raise ParameterError(f"depth {n} beyond the realization depth {realization.n}")
        ref = float(reference_means[n])
        if not ref > 0:
            raise ParameterError(f"reference mean for n={n} must be positive")
        fav = float(np.dot(w, pieces_projection_lengths(
            realization.model, realization.levels[n], n, th)))
        recs.append(RatioRecord(n, fav, float(realization.z_trace[n]), fav / ref))
    return RatioTrace(chain_id, recs)


@dataclass(frozen=True)
class ConvexityReport:
    """Second differences ``mu_{n-1} - 2 mu_n + mu_{n+1}`` and their tolerances.

    Row ``r`` concerns the middle index ``n = ns[r]``.
    """

    ns: np.ndarray
    per_theta_second_diff: np.ndarray
    per_theta_tolerance: np.ndarray
    integrated_second_diff: np.ndarray
    integrated_tolerance: np.ndarray

    @property
    def per_theta_ok(self) -> np.ndarray:
        return self.per_theta_second_diff >= -self.per_theta_tolerance

    @property
    def integrated_ok(self) -> np.ndarray:
        return self.integrated_second_diff >= -self.integrated_tolerance

    @property
    def passed(self) -> bool:
        return bool(self.per_theta_ok.all() and self.integrated_ok.all())


def convexity_check(table: Sequence[FavardEstimate], sigmas: float = 5.0,
                    exact_tol: float = 1e-12) -> ConvexityReport:
    """Check ``mu_{n-1} - mu_n >= mu_n - mu_{n+1}`` per angle and after integration.

    The tolerance is ``sigmas`` combined standard errors of the second
    difference, plus ``exact_tol`` for round-off when errors vanish.
    """
    table = sorted(table, key=lambda e: e.n)
    if len(table) < 3:
        raise ParameterError("convexity needs at least three consecutive depths")
    for a, b in zip(table, table[1:]):
        if b.n != a.n + 1:
            raise ParameterError("convexity needs consecutive depths")
    mu = np.stack([e.per_theta_mean for e in table])
    se = np.stack([e.per_theta_stderr for e in table])
    m = np.array([e.mean for e in table])
    sm = np.array([e.stderr for e in table])
    d2 = mu[:-2] - 2 * mu[1:-1] + mu[2:]
    tol = sigmas * np.sqrt(se[:-2] ** 2 + 4 * se[1:-1] ** 2 + se[2:] ** 2) + exact_tol
    i2 = m[:-2] - 2 * m[1:-1] + m[2:]
    itol = sigmas * np.sqrt(sm[:-2] ** 2 + 4 * sm[1:-1] ** 2 + sm[2:] ** 2) + exact_tol
    ns = np.array([e.n for e in table[1:-1]])
    return ConvexityReport(ns, d2, tol, i2, itol)
