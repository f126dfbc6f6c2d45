"""Slow, obviously-correct reference implementations used only by tests."""

import functools
import itertools
from fractions import Fraction
from math import floor

import numpy as np


def monotone_couplings(n, m):
    """Every monotone coupling of index sequences 0..n-1 and 0..m-1.

    A coupling is a lattice path from (0, 0) to (n-1, m-1) with unit steps
    (1, 0), (0, 1) or (1, 1).
    """
    def walk(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                for rest in walk(a, b):
                    yield [(i, j)] + rest

    yield from walk(0, 0)


@functools.lru_cache(maxsize=None)
def _coupling_table(n, m):
    """All couplings as index arrays, padded by repeating the final pair."""
    paths = list(monotone_couplings(n, m))
    width = n + m - 1
    rows = np.full((len(paths), width), n - 1)
    cols = np.full((len(paths), width), m - 1)
    for k, path in enumerate(paths):
        rows[k, : len(path)] = [i for i, _ in path]
        cols[k, : len(path)] = [j for _, j in path]
    return rows, cols


def frechet_by_enumeration(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    rows, cols = _coupling_table(len(a), len(b))
    return float(d[rows, cols].max(axis=1).min())


@functools.lru_cache(maxsize=None)
def _permutations(n):
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


def best_permutation(cost):
    """Permutation with the minimum total over all one-to-one assignments of a square matrix."""
    c = np.asarray(cost, float)
    perms = _permutations(c.shape[0])
    totals = c[np.arange(c.shape[0]), perms].sum(axis=1)
    return perms[int(np.argmin(totals))]


def assignment_by_permutation(cost):
    """Minimum total over all one-to-one assignments of a square matrix."""
    c = np.asarray(cost, float)
    return float(c[np.arange(c.shape[0]), best_permutation(c)].sum())


def supercover_by_enumeration(p0, p1, x_lo=-50, y_lo=-25, cell=Fraction(1, 2), rows=200, cols=100):
    """Cells whose half-open square [lo, lo+cell) holds a point of the closed segment.

    Exact rational arithmetic: for each candidate cell, the set of segment
    parameters t falling into the cell along x and along y is an interval;
    the cell is hit when the two intervals (and [0, 1]) overlap in a way that
    respects the half-open upper edges. The far window edge belongs to the
    last cell.
    """
    x0, y0, x1, y1 = (Fraction(v) for v in (p0[0], p0[1], p1[0], p1[1]))
    x_lo, y_lo = Fraction(x_lo), Fraction(y_lo)
    x_hi, y_hi = x_lo + rows * cell, y_lo + cols * cell

    def axis_interval(a0, a1, lo, hi, last):
        """Parameter set {t in [0,1]: lo <= a(t) < hi} (or <= hi on the last cell) as (start, end, start_open, end_open)."""
        if a0 == a1:
            inside = lo <= a0 < hi or (last and a0 == hi)
            return (Fraction(0), Fraction(1), False, False) if inside else None
        t_lo = (lo - a0) / (a1 - a0)
        t_hi = (hi - a0) / (a1 - a0)
        if a1 > a0:
            # lo side closed, hi side open unless last cell
            return (t_lo, t_hi, False, not last)
        return (t_hi, t_lo, not last, False)

    def intersect(i1, i2):
        s = max(i1[0], i2[0])
        e = min(i1[1], i2[1])
        s_open = (i1[2] if i1[0] == s else False) or (i2[2] if i2[0] == s else False)
        e_open = (i1[3] if i1[1] == e else False) or (i2[3] if i2[1] == e else False)
        if s > e or (s == e and (s_open or e_open)):
            return None
        return (s, e, s_open, e_open)

    cells = set()
    r_range = range(max(0, floor((min(x0, x1) - x_lo) / cell) - 1), min(rows, floor((max(x0, x1) - x_lo) / cell) + 2))
    unit = (Fraction(0), Fraction(1), False, False)
    for r in r_range:
        ix = axis_interval(x0, x1, x_lo + r * cell, x_lo + (r + 1) * cell, r == rows - 1)
        span = None if ix is None else intersect(ix, unit)
        if span is None:
            continue
        # y values reachable inside this row bound the candidate columns
        ya, yb = y0 + span[0] * (y1 - y0), y0 + span[1] * (y1 - y0)
        c_lo = max(0, floor((min(ya, yb) - y_lo) / cell) - 1)
        c_hi = min(cols, floor((max(ya, yb) - y_lo) / cell) + 2)
        for c in range(c_lo, c_hi):
            iy = axis_interval(y0, y1, y_lo + c * cell, y_lo + (c + 1) * cell, c == cols - 1)
            if iy is not None and intersect(span, iy) is not None:
                cells.add((r, c))
    return cells


def _orient(a, b, c):
    v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return 0 if v == 0 else (1 if v > 0 else -1)


def _on_segment(a, b, c):
    return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])


def segments_intersect(p1, p2, q1, q2):
    o1, o2, o3, o4 = _orient(p1, p2, q1), _orient(p1, p2, q2), _orient(q1, q2, p1), _orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and _on_segment(p1, p2, q1)) or (o2 == 0 and _on_segment(p1, p2, q2))
            or (o3 == 0 and _on_segment(q1, q2, p1)) or (o4 == 0 and _on_segment(q1, q2, p2)))


def self_intersects(poly):
    """Any pair of non-adjacent edges of the closed polygon touching, checked pair by pair."""
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    return any(segments_intersect(*edges[i], *edges[j])
               for i in range(n) for j in range(i + 2, n) if not (i == 0 and j == n - 1))
