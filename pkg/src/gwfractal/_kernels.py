"""Compiled inner loops.

Two hot paths live here: the measure of a union of equal-width intervals
(every shape at a given level of a chain has the same projection width) and
the top-down survival recursion along a single line.
"""


import numpy as np
from numba import njit

TOUCH_TOL = 1e-12


@njit(cache=True)
def _union_binned(lo, mn, mx, w, bmin, bmax):
    # lo holds the left ends, mn/mx their extremes; buffers hold >= 8n + 1026.
    n = lo.size
    if n == 0 or w <= 0.0:
        return 0.0
    nbf = (mx - mn) / w
    if nbf > 8.0 * n + 1024.0:
        srt = np.sort(lo)
        tot = w
        for k in range(1, n):
            tot += min(srt[k] - srt[k - 1], w)
        return tot
    nb = int(nbf) + 1
    for b in range(nb):
        bmin[b] = np.inf
        bmax[b] = -np.inf
    inv = 1.0 / w
    for k in range(n):
        v = lo[k]
        b = min(int((v - mn) * inv), nb - 1)
        bmin[b] = min(bmin[b], v)
        bmax[b] = max(bmax[b], v)
    tot = 0.0
    reach = -np.inf
    for b in range(nb):
        a = bmin[b]
        if a == np.inf:
            continue
        h = bmax[b] + w
        if a > reach:
            tot += h - a
            reach = h
        elif h > reach:
            tot += h - reach
            reach = h
    return tot


@njit(cache=True)
def union_equal_width(lo, w):
    """Measure of ``U [lo_k, lo_k + w]``.

    Left ends are bucketed into bins of width ``w``; intervals sharing a bin
    overlap, so each bin collapses to one interval and a single ordered pass
    over the bins finishes the sweep.  Sparse inputs fall back to sorting.
    """
    if lo.size == 0:
        return 0.0
    cap = 8 * lo.size + 1026
    return _union_binned(lo, lo.min(), lo.max(), w, np.empty(cap), np.empty(cap))


@njit(cache=True)
def square_projection_lengths(X, Y, side, sins, coss, fatten):
    """Projection length of a union of equal squares for each angle.

    ``X``, ``Y`` are integer lower-left coordinates in units of ``side``.
    """
    m = sins.size
    n = X.size
    out = np.empty(m)
    lo = np.empty(n)
    cap = 8 * n + 1026
    bmin = np.empty(cap)
    bmax = np.empty(cap)
    for q in range(m):
        s = sins[q]
        c = coss[q]
        off = min(0.0, -s, c, c - s) * side - fatten
        w = side * (s + abs(c)) + 2.0 * fatten
        mn = np.inf
        mx = -np.inf
        for k in range(n):
            v = side * (-X[k] * s + Y[k] * c) + off
            lo[k] = v
            mn = min(mn, v)
            mx = max(mx, v)
        out[q] = _union_binned(lo, mn, mx, w, bmin, bmax)
    return out


@njit(cache=True)
def disc_projection_lengths(cx, cy, radius, sins, coss, fatten):
    m = sins.size
    n = cx.size
    out = np.empty(m)
    lo = np.empty(n)
    cap = 8 * n + 1026
    bmin = np.empty(cap)
    bmax = np.empty(cap)
    r = radius + fatten
    for q in range(m):
        s = sins[q]
        c = coss[q]
        mn = np.inf
        mx = -np.inf
        for k in range(n):
            v = -cx[k] * s + cy[k] * c - r
            lo[k] = v
            mn = min(mn, v)
            mx = max(mx, v)
        out[q] = _union_binned(lo, mn, mx, 2.0 * r, bmin, bmax)
    return out


@njit(cache=True)
def unit_chord(t, s, c):
    """Chord of the unit square cut by ``line(theta, t)``."""
    px = -t * s
    py = t * c
    lo = -np.inf
    hi = np.inf
    if c == 0.0:
        if px < 0.0 or px > 1.0:
            return 0.0
    else:
        u1 = (0.0 - px) / c
        u2 = (1.0 - px) / c
        lo = max(lo, min(u1, u2))
        hi = min(hi, max(u1, u2))
    if s == 0.0:
        if py < 0.0 or py > 1.0:
            return 0.0
    else:
        u1 = (0.0 - py) / s
        u2 = (1.0 - py) / s
        lo = max(lo, min(u1, u2))
        hi = min(hi, max(u1, u2))
    return max(0.0, hi - lo)


@njit(cache=True)
def _node(t, d, L, s, c, lo0, hi0, kind, p, members, sizes, probs, marg,
          want_surv, stats):
    # Returns (P[line meets S_d], E[L^d |line & S_d|]) in the unit frame.
    if d == 0:
        return 1.0, unit_chord(t, s, c)
    L2 = L * L
    pc = np.zeros(L2)
    hit = np.zeros(L2, dtype=np.bool_)
    e = 0.0
    for i in range(L):
        for j in range(L):
            tc = L * t + s * i - c * j
            if tc >= lo0 and tc <= hi0:
                stats[0] += 1
                if tc - lo0 < TOUCH_TOL or hi0 - tc < TOUCH_TOL:
                    stats[1] += 1
                ps, pe = _node(tc, d - 1, L, s, c, lo0, hi0, kind, p, members,
                               sizes, probs, marg, want_surv, stats)
                m = i * L + j
                hit[m] = True
                pc[m] = ps
                e += marg[m] * pe
    if not want_surv:
        return 0.0, e
    if kind == 0:
        q = 1.0
        for m in range(L2):
            if hit[m]:
                q *= 1.0 - p * pc[m]
        return 1.0 - q, e
    tot = 0.0
    for a in range(probs.size):
        q = probs[a]
        for r in range(sizes[a]):
            m = members[a, r]
            if hit[m]:
                q *= 1.0 - pc[m]
        tot += q
    return 1.0 - tot, e


@njit(cache=True)
def line_statistics(ts, depth, L, s, c, kind, p, members, sizes, probs, marg,
                    want_surv):
    """Survival probability and expected scaled chord for each offset in ``ts``.

    Returns ``(surv, echord, touched, nodes)``; ``touched`` flags lines that
    meet some square only along its boundary.
    """
    lo0 = min(0.0, -s, c, c - s)
    hi0 = max(0.0, -s, c, c - s)
    n = ts.size
    surv = np.zeros(n)
    ech = np.zeros(n)
    touched = np.zeros(n, dtype=np.bool_)
    nodes = 0
    stats = np.zeros(2, dtype=np.int64)
    for k in range(n):
        t = ts[k]
        if t < lo0 or t > hi0:
            continue
        stats[0] = 1
        stats[1] = 0
        if t - lo0 < TOUCH_TOL or hi0 - t < TOUCH_TOL:
            stats[1] = 1
        ps, pe = _node(t, depth, L, s, c, lo0, hi0, kind, p, members, sizes,
                       probs, marg, want_surv, stats)
        surv[k] = ps
        ech[k] = pe
        touched[k] = stats[1] > 0
        nodes += stats[0]
    return surv, ech, touched, nodes


@njit(cache=True)
def close_pair_count(X, Y, xmax, ymin):
    """Ordered pairs with ``|dX| <= xmax`` and ``|dY| >= ymin``; ``X`` sorted."""
    n = X.size
    total = 0
    for a in range(n):
        b = a + 1
        while b < n and X[b] - X[a] <= xmax:
            if abs(Y[b] - Y[a]) >= ymin:
                total += 2
            b += 1
    if ymin <= 0:
        total += n
    return total


@njit(cache=True)
def step_square_integral(lo, w):
    """Integral of ``f**2`` where ``f`` counts intervals ``[lo_k, lo_k + w]``
    covering a point; ``lo`` must be sorted."""
    n = lo.size
    total = 0.0
    depth = 0
    a = 0
    b = 0
    last = lo[0] if n > 0 else 0.0
    while b < n:
        if a < n and lo[a] <= lo[b] + w:
            x = lo[a]
            total += depth * depth * (x - last)
            last = x
            depth += 1
            a += 1
        else:
            x = lo[b] + w
            total += depth * depth * (x - last)
            last = x
            depth -= 1
            b += 1
    return total
