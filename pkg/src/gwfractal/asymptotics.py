"""Variance profile, the limit constant and the combinatorics of addresses.

``V(theta)`` is the integral over offsets of the variance of
``L |line & S_1|``.  For uniform models it controls the rate at which the
expected Favard length decays: ``n * E Fav(S_n)`` tends to the integral of
``2 / V(theta)`` over ``[0, pi]``.  Two independent evaluations are offered,
one straight from the variance and one through pairwise overlaps of
distinct first-level squares.

The second half of the module handles words over the letter grid:
substring counts, approximate uniformity of a long address, the sets of
addresses whose lines see enough expected mass, and the scan of the narrow
angular bands near the exceptional direction of a degenerate model.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateModelError, ParameterError, UnsupportedModelError
from .geometry import (Square, build_pieces, cell_to_address, chord_profile,
                       pair_chord_integral, sincos)
from .models import GridModel, Model, classify
from .quadrature import QuadratureRule
from .survival import expected_projection_length, require_grid


def _first_level_squares(L: int) -> list[Square]:
    side = 1.0 / L
    return [Square(i * side, j * side, side) for i in range(L) for j in range(L)]


def _require_uniform(model: Model) -> GridModel:
    model = require_grid(model)
    if not classify(model).is_uniform:
        raise UnsupportedModelError(
            f"{model.model_id}: the variance profile is defined here for uniform models only")
    return model


def _v_definition(model: GridModel, theta: float) -> float:
    L = model.L
    pc = build_pieces([chord_profile(theta, q) for q in _first_level_squares(L)])
    out = []
    for g in (pc.left, pc.mid, pc.right):
        if model.is_bernoulli:
            p = float(model.law.p)
            var = L * L * p * (1 - p) * np.sum(g * g, axis=0)
        else:
            x = L * (model.atom_masks.astype(float) @ g)
            pr = model.atom_probs[:, None]
            var = np.sum(pr * x * x, axis=0) - np.sum(pr * x, axis=0) ** 2
        out.append(var)
    return pc.simpson(*out)


def _v_alternative(model: GridModel, theta: float) -> float:
    L = model.L
    side = 1.0 / L
    pairs = model.pair_probs
    cache: dict[tuple[int, int], float] = {}
    total = 0.0
    base = Square(0.0, 0.0, side)
    for a in range(L * L):
        for b in range(L * L):
            if a == b or pairs[a, b] == 0.0:
                continue
            d = (b // L - a // L, b % L - a % L)
            if d not in cache:
                cache[d] = pair_chord_integral(theta, base, Square(d[0] * side, d[1] * side, side))
            total += pairs[a, b] * cache[d]
    return L * L * total


def v_theta(model: Model, theta: float, method: str = "definition") -> float:
    """Integrated variance of ``L |line(theta, t) & S_1|`` over ``t``.

    ``method`` is ``"definition"`` (exact variance on merged pieces) or
    ``"alternative"`` (sum over pairs of distinct first-level squares).
    """
    model = _require_uniform(model)
    if method == "definition":
        return _v_definition(model, theta)
    if method == "alternative":
        return _v_alternative(model, theta)
    raise ParameterError(f"unknown method {method!r}")


def clustered_angles(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Angle nodes and weights on ``[0, pi]`` crowded towards 0, pi/2 and pi.

    Each half is mapped by ``u -> (pi/2)(u - sin(2 pi u) / (2 pi))`` and the
    midpoint rule is applied in ``u``.
    """
    if nodes < 2 or nodes % 2:
        raise ParameterError("clustered rule needs an even node count >= 2")
    m = nodes // 2
    u = (np.arange(m) + 0.5) / m
    half = 0.5 * math.pi * (u - np.sin(2 * math.pi * u) / (2 * math.pi))
    w = 0.5 * math.pi * (1 - np.cos(2 * math.pi * u)) / m
    return np.concatenate([half, half + 0.5 * math.pi]), np.concatenate([w, w])


@dataclass(frozen=True)
class LimitConstant:
    constant: float
    refinement_error: float
    nodes: int
    min_v: float


def limit_constant(model: Model, nodes: int = 512, method: str = "alternative") -> LimitConstant:
    """Integral of ``2 / V(theta)`` over ``[0, pi]`` for a non-degenerate uniform model.

    The error is the change against a rule with half the nodes.
    """
    model = _require_uniform(model)
    cls = classify(model)
    if cls.is_degenerate:
        raise DegenerateModelError(
            f"{model.model_id}: V vanishes at an axis direction, the limit is infinite")
    for th in (0.0, 0.5 * math.pi):
        if v_theta(model, th, method) < 1e-9:
            raise DegenerateModelError(f"{model.model_id}: V({th}) vanishes")

    def integral(m):
        th, w = clustered_angles(m)
        v = np.array([v_theta(model, float(t), method) for t in th])
        return float(np.dot(w, 2.0 / v)), float(v.min())

    fine, vmin = integral(nodes)
    if vmin < 1e-9:
        raise DegenerateModelError(f"{model.model_id}: min V = {vmin:.3g} below 1e-9")
    coarse, _ = integral(nodes // 2 if (nodes // 2) % 2 == 0 else nodes // 2 + 1)
    return LimitConstant(fine, abs(fine - coarse), nodes, vmin)


# --- words over the letter grid -------------------------------------------


@dataclass(frozen=True)
class PatternSet:
    length: int
    words: frozenset

    def __contains__(self, word) -> bool:
        return tuple(map(tuple, word)) in self.words

    def __len__(self):
        return len(self.words)

    def __iter__(self):
        return iter(sorted(self.words))


def _as_word(word) -> tuple:
    return tuple((int(a), int(b)) for a, b in word)


def _pattern_words(patterns) -> tuple[int, frozenset]:
    if isinstance(patterns, PatternSet):
        return patterns.length, patterns.words
    words = frozenset(_as_word(w) for w in patterns)
    lengths = {len(w) for w in words}
    if len(lengths) != 1:
        raise ParameterError("patterns must be non-empty and share one length")
    return lengths.pop(), words


def count_substrings(lam: Sequence, patterns) -> int:
    """Number of windows ``lam[i:i+k]`` that belong to ``patterns``."""
    k, words = _pattern_words(patterns)
    lam = _as_word(lam)
    if k > len(lam):
        raise ParameterError(f"pattern length {k} exceeds word length {len(lam)}")
    return sum(1 for i in range(len(lam) - k + 1) if lam[i:i + k] in words)


def _window_codes(lam: Sequence, k: int, L: int) -> np.ndarray:
    arr = np.asarray(lam, dtype=np.int64).reshape(-1, 2)
    if arr.size and (arr.min() < 1 or arr.max() > L):
        raise ParameterError(f"letters must lie in [1, {L}]^2")
    letters = (arr[:, 0] - 1) * L + (arr[:, 1] - 1)
    n = letters.size
    codes = np.zeros(n - k + 1, dtype=np.int64)
    for r in range(k):
        codes = codes * (L * L) + letters[r:n - k + 1 + r]
    return codes


def uniformity_deviation(lam: Sequence, k: int, L: int) -> float:
    """Largest ``|Count(lam, eta) / expected - 1|`` over words ``eta`` of length ``k``."""
    n = len(lam)
    if not 1 <= k <= n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    counts = np.bincount(_window_codes(lam, k, L), minlength=L ** (2 * k))
    expected = (n - k + 1) * float(L) ** (-2 * k)
    return float(np.max(np.abs(counts - expected)) / expected)


def approx_uniform(lam: Sequence, k: int, eps: float, L: int) -> bool:
    """Whether every word of length ``k`` occurs within a factor ``1 +- eps``
    of its share ``(n - k + 1) L**(-2k)`` of the windows of ``lam``."""
    if eps < 0:
        raise ParameterError("eps must be non-negative")
    return uniformity_deviation(lam, k, L) <= eps


def w_set(L: int, k: int) -> PatternSet:
    """Words ``(1,1) (L,1) u_1 ... u_k`` with every ``u_m`` in the last column.

    Their squares tile the thin rectangle
    ``[1/L - L**(-k-2), 1/L] x [0, L**-2]``.
    """
    if k < 0:
        raise ParameterError("w_set needs k >= 0")
    head = ((1, 1), (L, 1))
    tails = itertools.product([(L, j) for j in range(1, L + 1)], repeat=k)
    return PatternSet(k + 2, frozenset(head + t for t in tails))


def _mass_function_pieces(model: GridModel, theta: float, alpha: tuple[int, int]):
    """Pieces of ``t -> sum_{kappa != alpha} chord_kappa(t) P[kappa | alpha]``."""
    L = model.L
    a_idx = (alpha[0] - 1) * L + (alpha[1] - 1)
    p_alpha = model.marginals[a_idx]
    if p_alpha <= 0:
        raise ParameterError(f"square {alpha} is never kept")
    cond = model.pair_probs[a_idx] / p_alpha
    squares = _first_level_squares(L)
    s, c = sincos(theta)
    ends = (min(0.0, -s, c, c - s), max(0.0, -s, c, c - s))
    pc = build_pieces([chord_profile(theta, q) for q in squares], extra=ends)
    weights = np.array([0.0 if m == a_idx else cond[m] for m in range(L * L)])
    return pc.u, pc.v, weights @ pc.left, weights @ pc.right


def _infimum_on_intervals(u, v, gl, gr, a, b) -> np.ndarray:
    """Infimum over the open intervals ``(a, b)`` of a piecewise linear function."""
    out = np.full(a.size, np.inf)
    for q in range(u.size):
        lo = np.maximum(u[q], a)
        hi = np.minimum(v[q], b)
        over = hi > lo
        if not over.any():
            continue
        slope = (gr[q] - gl[q]) / (v[q] - u[q])
        val = np.minimum(gl[q] + slope * (lo - u[q]), gl[q] + slope * (hi - u[q]))
        out = np.where(over, np.minimum(out, val), out)
    return out


def lei_set(model: Model, theta: float, alpha, c: float, k: int) -> set:
    """Addresses ``eta`` of length ``k`` starting with ``alpha`` on whose
    projection the expected mass of the other first-level squares, given
    ``alpha`` is kept, never drops below ``c / L``.
    """
    model = require_grid(model)
    L = model.L
    if k < 1:
        raise ParameterError("k must be at least 1")
    alpha = (int(alpha[0]), int(alpha[1]))
    if not (1 <= alpha[0] <= L and 1 <= alpha[1] <= L):
        raise ParameterError(f"letter {alpha} outside [1, {L}]^2")
    u, v, gl, gr = _mass_function_pieces(model, theta, alpha)
    sub = L ** (k - 1)
    xs, ys = np.meshgrid(np.arange(sub), np.arange(sub), indexing="ij")
    X = (alpha[0] - 1) * sub + xs.ravel()
    Y = (alpha[1] - 1) * sub + ys.ravel()
    s, co = sincos(theta)
    side = float(L) ** (-k)
    a = side * (-X * s + Y * co) + side * min(0.0, -s, co, co - s)
    b = a + side * (s + abs(co))
    inf = _infimum_on_intervals(u, v, gl, gr, a, b)
    keep = inf >= c / L - 1e-12
    return {cell_to_address(int(x), int(y), k, L) for x, y in zip(X[keep], Y[keep])}


@dataclass(frozen=True)
class BandRow:
    k: int
    theta: float
    n: int
    e_proj: float
    ratio_n_over_Lk: float
    error: float


def band_angle(model: GridModel, k: int) -> float:
    """Representative angle of band ``k`` (``tan`` at the geometric middle)."""
    cls = classify(model)
    if cls.is_vertically_degenerate:
        return math.atan(float(model.L) ** (k + 0.5))
    if cls.is_horizontally_degenerate:
        return math.atan(float(model.L) ** (-k - 0.5))
    raise ParameterError(f"{model.model_id} is not a degenerate model")


def degenerate_band_scan(model: Model, n: int, ks: Iterable[int],
                         rule: QuadratureRule = QuadratureRule(256),
                         tol: float = 1e-4) -> list[BandRow]:
    """Expected projection length in the angular bands next to the exceptional
    direction, scaled by ``n / L**k``."""
    model = require_grid(model)
    rows = []
    for k in ks:
        if k < 0:
            raise ParameterError("band index must be non-negative")
        th = band_angle(model, k)
        est = expected_projection_length(model, th, n, rule, tol=tol)
        rows.append(BandRow(k, th, n, est.value, est.value * n / float(model.L) ** k, est.error))
    return rows
