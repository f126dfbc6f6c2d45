"""BEV rasterization of SD maps, lane-segment areas and area boundaries.

Cells are half-open: row ``r`` covers ``[x_min + r*cell_x, x_min + (r+1)*cell_x)``
(likewise for columns), except that points lying exactly on the far edge of
the window fall into the last row/column. A line is rasterized as the set of
cells containing at least one of its points (supercover); polygons are filled
by testing cell centers with the even-odd rule.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import AreaInstance, BevGridSpec, LaneSegment, as_points


@dataclass(frozen=True, eq=False)
class SdMap:
    """Vectorized SD map already transformed into the ego frame."""

    polylines: tuple = ()  # of (points (n, 3), road_type)

    def __post_init__(self):
        lines = []
        for pts, road_type in self.polylines:
            arr = as_points(pts, "sd polyline")
            if len(arr) < 2:
                raise ValueError("SD map polylines need at least 2 points")
            lines.append((arr, int(road_type)))
        object.__setattr__(self, "polylines", tuple(lines))

    def __eq__(self, other):
        if not isinstance(other, SdMap) or len(self.polylines) != len(other.polylines):
            return False
        return all(np.array_equal(a, b) and s == t for (a, s), (b, t) in zip(self.polylines, other.polylines))

    __hash__ = None


@dataclass(eq=False)
class BevMask:
    grid: np.ndarray
    spec: BevGridSpec = field(default_factory=BevGridSpec)
    degenerate: bool = False

    def __post_init__(self):
        if self.grid.shape != self.spec.shape:
            raise ValueError(f"grid shape {self.grid.shape} != spec {self.spec.shape}")

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.grid))

    def cells(self) -> set:
        return {(int(r), int(c)) for r, c in zip(*np.nonzero(self.grid))}


def world_to_cell(p, spec: BevGridSpec = BevGridSpec()) -> Optional[tuple[int, int]]:
    """Grid cell ``(row, col)`` containing point ``p``, or ``None`` outside the window."""
    r = _index(Fraction(float(p[0])), _Axis.of(spec, 0))
    c = _index(Fraction(float(p[1])), _Axis.of(spec, 1))
    if r is None or c is None:
        return None
    return r, c


@dataclass(frozen=True)
class _Axis:
    """Exact grid lines ``lo + k * cell`` along one axis."""

    lo: Fraction
    hi: Fraction
    cell: Fraction
    n: int

    @staticmethod
    def of(spec: BevGridSpec, axis: int) -> "_Axis":
        lo, hi = spec.x_range if axis == 0 else spec.y_range
        n = spec.rows if axis == 0 else spec.cols
        lo, hi = Fraction(lo), Fraction(hi)
        return _Axis(lo, hi, (hi - lo) / n, n)


def _index(v: Fraction, ax: _Axis) -> Optional[int]:
    if not (ax.lo <= v <= ax.hi):
        return None
    return min(math.floor((v - ax.lo) / ax.cell), ax.n - 1)


def _axis_breaks(a0: Fraction, a1: Fraction, ax: _Axis) -> list:
    """Parameters t in (0, 1) at which the segment crosses a grid line of one axis."""
    if a0 == a1:
        return []
    lo, hi = min(a0, a1), max(a0, a1)
    k_lo = max(0, math.ceil((lo - ax.lo) / ax.cell))
    k_hi = min(ax.n, math.floor((hi - ax.lo) / ax.cell))
    ts = []
    for k in range(k_lo, k_hi + 1):
        line = ax.lo + k * ax.cell
        if lo < line < hi:
            ts.append((line - a0) / (a1 - a0))
    return ts


def supercover_cells(p0, p1, spec: BevGridSpec = BevGridSpec()) -> set:
    """Every cell containing a point of segment ``p0 -> p1`` (xy only), clipped to the window.

    Between two consecutive grid-line crossings the cell cannot change, so
    the crossings plus one interior point per gap visit every touched cell.
    A float pass is used when every decision it makes is clear of grid lines;
    otherwise the segment is redone in exact rational arithmetic.
    """
    cells = _supercover_float(p0, p1, spec)
    return cells if cells is not None else _supercover_exact(p0, p1, spec)


_CLEARANCE = 1e-9


def _supercover_float(p0, p1, spec) -> Optional[set]:
    """Float traversal; ``None`` when some decision lies too close to a grid line."""
    ax, ay = _Axis.of(spec, 0), _Axis.of(spec, 1)
    p = np.array([float(p0[0]), float(p0[1])])
    q = np.array([float(p1[0]), float(p1[1])])
    ends = [(_index(Fraction(v[0]), ax), _index(Fraction(v[1]), ay)) for v in (p, q)]
    cells = {rc for rc in ends if None not in rc}
    d = q - p
    lo = np.array([spec.x_range[0], spec.y_range[0]])
    hi = np.array([spec.x_range[1], spec.y_range[1]])
    cell = np.array([spec.cell_x, spec.cell_y])
    n = np.array([spec.rows, spec.cols])

    # Grid-line crossings; ``own`` records the exact line index on the crossed axis.
    ts, own = [np.array([0.0, 1.0])], [np.full((2, 2), -1)]
    for axis in range(2):
        if d[axis] == 0:
            if ends[0][axis] is None:
                return cells  # runs parallel to the window, outside it
            continue
        a, b = sorted((p[axis], q[axis]))
        k = np.arange(max(0, math.floor((a - lo[axis]) / cell[axis])), min(n[axis], math.ceil((b - lo[axis]) / cell[axis])) + 1)
        line = lo[axis] + k * cell[axis]
        near = (np.abs(line - a) < _CLEARANCE) | (np.abs(line - b) < _CLEARANCE)
        if near.any():
            # An endpoint exactly on a grid line is unambiguous: that line is not crossed inside.
            exact = _Axis.of(spec, axis)
            ends_exact = (Fraction(a), Fraction(b))
            if not all(exact.lo + int(kk) * exact.cell in ends_exact for kk in k[near]):
                return None
        inner = (line > a) & (line < b) & ~near
        ts.append((line[inner] - p[axis]) / d[axis])
        o = np.full((int(inner.sum()), 2), -1)
        o[:, axis] = k[inner]
        own.append(o)
    t = np.concatenate(ts)
    own = np.concatenate(own)
    order = np.argsort(t, kind="stable")
    t, own = t[order], own[order]
    if np.any(np.diff(t) < _CLEARANCE):
        return None

    probe_t = np.concatenate([t[1:-1], (t[1:] + t[:-1]) / 2])
    probe_own = np.concatenate([own[1:-1], np.full((len(t) - 1, 2), -1)])
    pts = p + probe_t[:, None] * d
    idx = probe_own.copy()
    keep = np.ones(len(probe_t), dtype=bool)
    for axis in range(2):
        if d[axis] == 0:
            idx[:, axis] = ends[0][axis]
            continue
        free = probe_own[:, axis] < 0
        v = pts[free, axis]
        u = (v - lo[axis]) / cell[axis]
        fl = np.floor(u)
        near_line = np.minimum(u - fl, fl + 1 - u) * cell[axis] < _CLEARANCE
        near_edge = np.minimum(np.abs(v - lo[axis]), np.abs(v - hi[axis])) < _CLEARANCE
        if np.any(near_line | near_edge):
            return None
        idx[free, axis] = fl.astype(np.int64)
        keep[free] &= (v > lo[axis]) & (v < hi[axis])
    idx = np.minimum(idx[keep], n - 1)
    cells.update(map(tuple, idx.tolist()))
    return cells


def _supercover_exact(p0, p1, spec):
    ax, ay = _Axis.of(spec, 0), _Axis.of(spec, 1)
    x0, y0, x1, y1 = (Fraction(float(v)) for v in (p0[0], p0[1], p1[0], p1[1]))
    ts = sorted(set([Fraction(0), Fraction(1)] + _axis_breaks(x0, x1, ax) + _axis_breaks(y0, y1, ay)))
    probes = ts + [(a + b) / 2 for a, b in zip(ts, ts[1:])]
    dx, dy = x1 - x0, y1 - y0
    cells = set()
    for t in probes:
        r = _index(x0 + t * dx, ax)
        c = _index(y0 + t * dy, ay)
        if r is not None and c is not None:
            cells.add((r, c))
    return cells


def _inside_window(pts, spec) -> bool:
    return bool(np.all((pts[:, 0] >= spec.x_range[0]) & (pts[:, 0] <= spec.x_range[1])
                       & (pts[:, 1] >= spec.y_range[0]) & (pts[:, 1] <= spec.y_range[1])))


def polyline_cells(points, spec: BevGridSpec = BevGridSpec()) -> set:
    pts = np.asarray(points, dtype=np.float64)
    cells = set()
    if len(pts) == 1:
        c = world_to_cell(pts[0], spec)
        return {c} if c else cells
    for a, b in zip(pts[:-1], pts[1:]):
        cells |= supercover_cells(a, b, spec)
    return cells


def _paint(grid, cells, value=1):
    if cells:
        rr, cc = np.array(sorted(cells)).T
        grid[rr, cc] = np.maximum(grid[rr, cc], value)


def rasterize_sdmap(sdmap: SdMap, spec: BevGridSpec = BevGridSpec(), clip: bool = True,
                    by_type: bool = False) -> BevMask:
    """Rasterize SD-map polylines.

    With ``by_type`` each marked cell holds ``road_type + 1`` (the largest
    one where polylines overlap) instead of 1. With ``clip=False`` a polyline
    leaving the window raises ``ValueError`` instead of being clipped.
    """
    grid = np.zeros(spec.shape, dtype=np.uint8)
    for pts, road_type in sdmap.polylines:
        if not clip and not _inside_window(pts, spec):
            raise ValueError("SD map polyline extends beyond the BEV window")
        _paint(grid, polyline_cells(pts, spec), road_type + 1 if by_type else 1)
    return BevMask(grid, spec)


def _orient(a, b, c):
    v = (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
    return np.sign(v)


def _on_segment(a, b, c):
    return ((np.minimum(a[..., 0], b[..., 0]) <= c[..., 0]) & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
            & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1]) & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1])))


def polygon_is_degenerate(poly: np.ndarray) -> bool:
    """Zero area or a self-intersection between non-adjacent edges."""
    poly = np.asarray(poly, dtype=np.float64)[:, :2]
    x, y = poly[:, 0], poly[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    if area <= 1e-12:
        return True
    n = len(poly)
    # Every edge pair (i, j) at once; edge k runs from poly[k] to poly[k + 1].
    p1, p2 = poly[:, None], np.roll(poly, -1, axis=0)[:, None]
    q1, q2 = poly[None, :], np.roll(poly, -1, axis=0)[None, :]
    o1, o2 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    o3, o4 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    hit = ((o1 != o2) & (o3 != o4)) | ((o1 == 0) & _on_segment(p1, p2, q1)) | ((o2 == 0) & _on_segment(p1, p2, q2))
    hit |= ((o3 == 0) & _on_segment(q1, q2, p1)) | ((o4 == 0) & _on_segment(q1, q2, p2))
    i, j = np.triu_indices(n, 2)
    pairs = ~((i == 0) & (j == n - 1))
    return bool(hit[i[pairs], j[pairs]].any())


def fill_polygon(poly, spec: BevGridSpec = BevGridSpec()) -> np.ndarray:
    """Even-odd scanline fill over cell centers; returns a uint8 grid."""
    poly = np.asarray(poly, dtype=np.float64)[:, :2]
    grid = np.zeros(spec.shape, dtype=np.uint8)
    if len(poly) < 3:
        return grid
    xs, ys = poly[:, 0], poly[:, 1]
    x0, y0 = xs, ys
    x1, y1 = np.roll(xs, -1), np.roll(ys, -1)
    row_lo = max(0, math.floor((xs.min() - spec.x_range[0]) / spec.cell_x - 0.5))
    row_hi = min(spec.rows - 1, math.ceil((xs.max() - spec.x_range[0]) / spec.cell_x))
    yc = spec.y_range[0] + (np.arange(spec.cols) + 0.5) * spec.cell_y
    for r in range(row_lo, row_hi + 1):
        xc = spec.x_range[0] + (r + 0.5) * spec.cell_x
        cross = (x0 <= xc) != (x1 <= xc)
        if not cross.any():
            continue
        yi = np.sort(y0[cross] + (xc - x0[cross]) * (y1[cross] - y0[cross]) / (x1[cross] - x0[cross]))
        for a, b in zip(yi[0::2], yi[1::2]):
            grid[r, (yc >= a) & (yc < b)] = 1
    return grid


def lane_polygon(ls: LaneSegment) -> np.ndarray:
    """Left boundary followed by the reversed right boundary (xy)."""
    return np.concatenate([ls.left_boundary[:, :2], ls.right_boundary[::-1, :2]])


def lane_segment_mask(ls: LaneSegment, spec: BevGridSpec = BevGridSpec()) -> BevMask:
    """Cells whose centers lie between the lane's left and right boundaries."""
    poly = lane_polygon(ls)
    return BevMask(fill_polygon(poly, spec), spec, polygon_is_degenerate(poly))


def area_boundary_mask(area: AreaInstance, spec: BevGridSpec = BevGridSpec()) -> BevMask:
    """Supercover of the area curve itself; the interior is never filled."""
    grid = np.zeros(spec.shape, dtype=np.uint8)
    _paint(grid, polyline_cells(area.curve, spec))
    return BevMask(grid, spec)


def union_masks(masks: Sequence[BevMask], spec: BevGridSpec = BevGridSpec()) -> BevMask:
    grid = np.zeros(spec.shape, dtype=np.uint8)
    for m in masks:
        grid = np.maximum(grid, m.grid)
    return BevMask(grid, spec, any(m.degenerate for m in masks))


# ---------------------------------------------------------------------------
# export


def write_pgm(mask: BevMask, path) -> None:
    """Plain-text PGM (P2); image rows are grid rows, image columns grid columns."""
    g = mask.grid.astype(np.int64)
    maxval = max(1, int(g.max(initial=0)))
    lines = ["P2", f"{g.shape[1]} {g.shape[0]}", str(maxval)]
    lines += [" ".join(str(v) for v in row) for row in g]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def read_pgm(path) -> np.ndarray:
    tokens = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM file")
    w, h = int(tokens[1]), int(tokens[2])
    values = np.array(tokens[4:], dtype=np.int64)
    if values.size != w * h:
        raise ValueError(f"{path}: expected {w * h} values, found {values.size}")
    return values.reshape(h, w)


def write_csv(mask: BevMask, path) -> None:
    """One ``row,col`` line per marked cell in row-major order."""
    rr, cc = np.nonzero(mask.grid)
    body = "".join(f"{r},{c}\n" for r, c in zip(rr.tolist(), cc.tolist()))
    Path(path).write_text("row,col\n" + body, encoding="ascii", newline="\n")


def read_csv(path) -> set:
    lines = Path(path).read_text(encoding="ascii").splitlines()[1:]
    return {tuple(int(v) for v in ln.split(",")) for ln in lines if ln}
