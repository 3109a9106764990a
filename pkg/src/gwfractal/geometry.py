"""Lines, squares, discs and the exact calculus of their chord profiles.

Conventions
-----------
A direction ``theta`` in ``[0, pi]`` defines the projection
``proj_theta(x, y) = -x sin(theta) + y cos(theta)`` and the line
``{p : proj_theta(p) = t}``, which runs along ``(cos theta, sin theta)``.

Squares are closed.  For a square of side ``s`` the chord length
``t -> |line(theta, t) & Q|`` is a trapezoid (a tent on the diagonals and a
box at the axis directions).  Products of two such profiles are piecewise
quadratic, so Simpson's rule on the merged breakpoint pieces integrates them
exactly.

At the axis directions the profile has jumps; values on a piece are always
the one-sided limits from inside the piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ParameterError

BREAK_TOL = 1e-12
_SNAP = 1e-15


def sincos(theta: float) -> tuple[float, float]:
    """Return ``(sin theta, cos theta)`` with round-off zeros snapped to 0."""
    theta = check_theta(theta)
    s, c = math.sin(theta), math.cos(theta)
    if abs(s) < _SNAP:
        s = 0.0
    if abs(c) < _SNAP:
        c = 0.0
    return s, c


def check_theta(theta: float) -> float:
    theta = float(theta)
    if not (0.0 <= theta <= math.pi) or math.isnan(theta):
        raise ParameterError(f"angle {theta!r} outside [0, pi]")
    return theta


@dataclass(frozen=True)
class Line:
    theta: float
    t: float

    def __post_init__(self):
        check_theta(self.theta)


@dataclass(frozen=True)
class Square:
    """Closed axis-parallel square with lower-left corner ``(x, y)``."""

    x: float
    y: float
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ParameterError("square side must be positive")

    @classmethod
    def from_address(cls, address: Sequence[Sequence[int]], L: int) -> "Square":
        """The square coded by a word of grid letters ``(i, j)`` in ``[1, L]``.

        ``i`` counts columns left to right and ``j`` rows bottom to top; each
        letter selects a sub-square of the previous one.
        """
        X, Y = address_to_cell(address, L)
        n = len(address)
        side = Fraction(1, L**n)
        return cls(float(X * side), float(Y * side), float(side))

    @property
    def corners(self) -> np.ndarray:
        x, y, s = self.x, self.y, self.side
        return np.array([[x, y], [x + s, y], [x, y + s], [x + s, y + s]])


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError("disc radius must be positive")


Shape = Union[Square, Disc]

UNIT_SQUARE = Square(0.0, 0.0, 1.0)


def address_to_cell(address: Sequence[Sequence[int]], L: int) -> tuple[int, int]:
    """Integer lower-left coordinates of an address at its own level."""
    X = Y = 0
    for letter in address:
        i, j = letter
        if not (1 <= i <= L and 1 <= j <= L):
            raise ParameterError(f"letter {tuple(letter)} outside [1, {L}]^2")
        X = X * L + (i - 1)
        Y = Y * L + (j - 1)
    return X, Y


def cell_to_address(X: int, Y: int, n: int, L: int) -> tuple[tuple[int, int], ...]:
    letters = []
    for _ in range(n):
        letters.append((X % L + 1, Y % L + 1))
        X //= L
        Y //= L
    return tuple(reversed(letters))


class IntervalSet:
    """A finite union of closed intervals kept as sorted disjoint pieces."""

    def __init__(self, intervals: Iterable[Sequence[float]] = ()):
        pieces = sorted((float(a), float(b)) for a, b in intervals)
        merged: list[list[float]] = []
        for a, b in pieces:
            if b < a:
                raise ParameterError(f"interval [{a}, {b}] is reversed")
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        self.intervals = [tuple(p) for p in merged]

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    @property
    def lo(self) -> float:
        return self.intervals[0][0]

    @property
    def hi(self) -> float:
        return self.intervals[-1][1]

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __repr__(self):
        return f"IntervalSet({self.intervals})"


def projection_interval(theta: float, shape: Shape) -> IntervalSet:
    """Projection of a square or disc onto the ``theta`` axis."""
    s, c = sincos(theta)
    if isinstance(shape, Disc):
        m = -shape.cx * s + shape.cy * c
        return IntervalSet([(m - shape.radius, m + shape.radius)])
    p = shape.corners @ np.array([-s, c])
    return IntervalSet([(p.min(), p.max())])


def chord_length(line: Line, shape: Shape) -> float:
    """Length of ``line & shape`` by direct clipping."""
    s, c = sincos(line.theta)
    if isinstance(shape, Disc):
        d = -shape.cx * s + shape.cy * c - line.t
        h = shape.radius**2 - d * d
        return 2.0 * math.sqrt(h) if h > 0 else 0.0
    # Point on the line closest to the origin, then slab clipping along
    # the direction (c, s).
    px, py = -line.t * s, line.t * c
    lo, hi = -math.inf, math.inf
    for p0, d, a, b in ((px, c, shape.x, shape.x + shape.side),
                        (py, s, shape.y, shape.y + shape.side)):
        if d == 0.0:
            if p0 < a or p0 > b:
                return 0.0
            continue
        u1, u2 = (a - p0) / d, (b - p0) / d
        if u1 > u2:
            u1, u2 = u2, u1
        lo, hi = max(lo, u1), min(hi, u2)
    return max(0.0, hi - lo)


@dataclass(frozen=True)
class ChordProfile:
    """Piecewise linear chord length ``t -> |line(theta, t) & Q|``.

    ``breakpoints`` are strictly increasing; ``values`` are the chord
    lengths there, taken from inside the support at its two ends.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    @property
    def support(self) -> tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.support
        v = np.interp(t, self.breakpoints, self.values)
        return np.where((t < a) | (t > b), 0.0, v)

    def limits(self, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One-sided values at ``u+`` and ``v-`` for pieces ``u < v``.

        Pieces must not straddle a breakpoint of this profile.
        """
        a, b = self.support
        mid = 0.5 * (u + v)
        inside = (mid > a) & (mid < b)
        uu = np.clip(u, a, b)
        vv = np.clip(v, a, b)
        return (np.where(inside, np.interp(uu, self.breakpoints, self.values), 0.0),
                np.where(inside, np.interp(vv, self.breakpoints, self.values), 0.0))

    def integral(self) -> float:
        x, y = self.breakpoints, self.values
        return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def chord_profile(theta: float, square: Square) -> ChordProfile:
    s, c = sincos(theta)
    side = square.side
    base = -square.x * s + square.y * c
    # Corner offsets of the projection, in increasing order.
    offs = np.sort(np.array([0.0, -s * side, c * side, (c - s) * side]))
    p = base + offs
    peak = side / max(s, abs(c))
    pts = [p[0], p[1], p[2], p[3]]
    vals = [0.0, peak, peak, 0.0]
    if p[1] - p[0] < BREAK_TOL:
        pts, vals = pts[1:], vals[1:]
        vals[0] = peak
    if pts[-1] - pts[-2] < BREAK_TOL:
        pts, vals = pts[:-1], vals[:-1]
        vals[-1] = peak
    if len(pts) == 4 and pts[2] - pts[1] < BREAK_TOL:
        del pts[2], vals[2]
    return ChordProfile(np.array(pts, dtype=float), np.array(vals, dtype=float))


def merged_breakpoints(arrays: Iterable[np.ndarray]) -> np.ndarray:
    """Sorted union of breakpoints with near-duplicates (``< 1e-12``) removed."""
    x = np.sort(np.concatenate([np.asarray(a, dtype=float) for a in arrays]))
    if x.size == 0:
        return x
    keep = np.concatenate([[True], np.diff(x) >= BREAK_TOL])
    return x[keep]


@dataclass(frozen=True)
class Pieces:
    """Elementary intervals of a common refinement and the one-sided values
    of each profile at their ends and midpoints.

    ``left``, ``mid`` and ``right`` have shape ``(n_profiles, n_pieces)``.
    """

    u: np.ndarray
    v: np.ndarray
    left: np.ndarray
    mid: np.ndarray
    right: np.ndarray

    def simpson(self, f_left, f_mid, f_right) -> float:
        return float(np.sum((self.v - self.u) / 6.0 * (f_left + 4.0 * f_mid + f_right)))


def build_pieces(profiles: Sequence[ChordProfile], extra: Iterable[float] = ()) -> Pieces:
    x = merged_breakpoints([p.breakpoints for p in profiles] + [np.asarray(list(extra), float)])
    u, v = x[:-1], x[1:]
    m = 0.5 * (u + v)
    left = np.empty((len(profiles), u.size))
    right = np.empty_like(left)
    mid = np.empty_like(left)
    for k, p in enumerate(profiles):
        left[k], right[k] = p.limits(u, v)
        mid[k] = 0.5 * (left[k] + right[k])
    return Pieces(u, v, left, mid, right)


def interval_union_measure(intervals, fatten: float = 0.0) -> float:
    """Lebesgue measure of ``U [a - r, b + r]`` by sort and sweep."""
    arr = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if arr.shape[0] == 0:
        return 0.0
    if fatten < 0:
        raise ParameterError("fatten radius must be non-negative")
    a = arr[:, 0] - fatten
    b = arr[:, 1] + fatten
    if np.any(b < a):
        raise ParameterError("reversed interval")
    order = np.argsort(a, kind="stable")
    a, b = a[order], b[order]
    reach = np.maximum.accumulate(b)
    # A new component starts where the next left end exceeds everything so far.
    starts = np.concatenate([[True], a[1:] > reach[:-1]])
    idx = np.flatnonzero(starts)
    ends = np.append(idx[1:], a.size) - 1
    return float(np.sum(reach[ends] - a[idx]))


def pair_chord_integral(theta: float, a: Square, b: Square) -> float:
    """Exact value of the integral over t of the product of two chord lengths."""
    pa, pb = chord_profile(theta, a), chord_profile(theta, b)
    lo = max(pa.support[0], pb.support[0])
    hi = min(pa.support[1], pb.support[1])
    if hi - lo <= 0:
        return 0.0
    pc = build_pieces([pa, pb])
    return pc.simpson(pc.left[0] * pc.left[1], pc.mid[0] * pc.mid[1], pc.right[0] * pc.right[1])


def scaled_pair_integral_and_err(theta: float, eta, kappa, L: int) -> tuple[float, float]:
    """Scaled overlap of two addresses and the worst deviation from it.

    Returns ``(V, Err)`` where ``V = L**(2k)`` times the chord-product
    integral of the squares coded by ``eta`` (length ``k``) and ``kappa``,
    and ``Err`` is the essential supremum over the projection of ``eta``
    of ``|chord_kappa(t) - V|``.
    """
    k = len(eta)
    qe = Square.from_address(eta, L)
    qk = Square.from_address(kappa, L)
    V = float(L ** (2 * k)) * pair_chord_integral(theta, qe, qk)
    pe, pk = chord_profile(theta, qe), chord_profile(theta, qk)
    a, b = pe.support
    x = pk.breakpoints
    x = np.concatenate([[a], x[(x > a + BREAK_TOL) & (x < b - BREAK_TOL)], [b]])
    if x.size < 2 or b - a <= 0:
        return V, abs(float(pk(a)) - V)
    lft, rgt = pk.limits(x[:-1], x[1:])
    err = float(max(np.max(np.abs(lft - V)), np.max(np.abs(rgt - V))))
    return V, err
