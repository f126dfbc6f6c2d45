"""One-to-one matching and average precision."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

INTERPOLATIONS = ("all_point", "11_point", "101_point")


@dataclass(frozen=True)
class Assignment:
    pairs: list
    total_cost: float

    def as_dict(self) -> dict:
        return dict(self.pairs)


def hungarian_min_cost(cost) -> Assignment:
    """Minimum-cost one-to-one assignment on a (rows x cols) cost matrix.

    ``inf`` marks forbidden pairs. The result has as many pairs as possible
    under that restriction and, among those, the smallest total cost. Rows or
    columns with no finite entry stay unassigned. Among equally good
    assignments the lowest row index wins, then the lowest column index.

    >>> hungarian_min_cost([[1, 2], [2, 4]]).pairs
    [(0, 1), (1, 0)]
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"cost matrix must be 2-d, got shape {c.shape}")
    if np.isnan(c).any():
        raise ValueError("cost matrix contains NaN")
    finite = np.isfinite(c)
    if np.any(c[finite] < 0):
        raise ValueError("finite costs must be non-negative")
    if c.size == 0 or not finite.any():
        return Assignment([], 0.0)
    rows = np.flatnonzero(finite.any(axis=1))
    cols = np.flatnonzero(finite.any(axis=0))
    sub = c[np.ix_(rows, cols)]
    sub_finite = np.isfinite(sub)
    # A forbidden pair costs more than any complete feasible assignment, so
    # the solver maximises the number of feasible pairs first.
    big = (min(sub.shape) + 1) * (float(sub[sub_finite].max()) + 1.0)
    n = max(sub.shape)
    square = np.zeros((n, n))  # dummy rows/cols cost nothing
    square[: sub.shape[0], : sub.shape[1]] = np.where(sub_finite, sub, big)
    _, perm = linear_sum_assignment(square)
    real = np.zeros((n, n), dtype=bool)
    real[: sub.shape[0], : sub.shape[1]] = sub_finite
    # Reduced costs are sums of up to ~2n entries bounded by big; allow for their rounding only.
    tol = 16 * n * np.finfo(np.float64).eps * big
    lex = _lex_smallest(square, perm, real, tol)
    idx = np.arange(n)
    if square[idx, lex].sum() <= square[idx, perm].sum() + n * tol:
        perm = lex
    pairs = [(int(rows[i]), int(cols[j])) for i, j in enumerate(perm) if i < sub.shape[0] and real[i, j]]
    return Assignment(pairs, float(sum(c[i, j] for i, j in pairs)))


def _lex_smallest(c: np.ndarray, perm: np.ndarray, real: np.ndarray, tol: float) -> np.ndarray:
    """Among optimal assignments of square ``c``, pick the row-wise smallest.

    Dual potentials recovered from the optimum ``perm`` identify the tight
    edges; every optimal assignment is a perfect matching of that subgraph
    and vice versa. Rows are then fixed in order, each to its lowest real
    column reachable by an alternating path.
    """
    n = len(perm)
    own = c[np.arange(n), perm]
    # Shortest paths over column "reassignment" moves give the column duals.
    step = c - own[:, None]
    d = np.zeros(n)
    for _ in range(n):
        nd = np.minimum(d, (d[perm][:, None] + step).min(axis=0))
        if np.array_equal(nd, d):
            break
        d = nd
    reduced = step + d[perm][:, None] - d[None, :]
    tight = reduced <= tol
    perm = perm.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[perm] = np.arange(n)
    fixed = np.zeros(n, dtype=bool)
    for i in range(n):
        current = perm[i] if real[i, perm[i]] else n
        for j in np.flatnonzero(tight[i] & real[i]):
            if j >= current:
                break
            path = _alternating_path(tight, real, perm, owner, fixed, i, j)
            if path is not None and _exact_change(c, perm, path) <= 0:
                for r, col in path:
                    perm[r] = col
                    owner[col] = r
                break
        fixed[i] = True
    return perm


def _exact_change(c, perm, path) -> float:
    # fsum is correctly rounded, so the sign of the exact cost change is reliable.
    return math.fsum([c[r, col] for r, col in path] + [-c[r, perm[r]] for r, _ in path])


def _alternating_path(tight, real, perm, owner, fixed, i, j):
    """Moves letting row ``i`` take column ``j`` without disturbing settled rows.

    A settled row that ended up unassigned may still swap one placeholder
    column for another.
    """
    target = perm[i]

    def movable(r, col):
        return not fixed[r] or not (real[r, perm[r]] or real[r, col])

    start = owner[j]
    prev = {start: None}  # row -> (row that takes its column, that column)
    queue = deque([start])
    while queue:
        r = queue.popleft()
        for col in np.flatnonzero(tight[r]):
            if col == j or not movable(r, col):
                continue
            if col == target:
                moves = [(i, j), (r, col)]
                while prev[r] is not None:
                    r, taken = prev[r]
                    moves.append((r, taken))
                return moves
            nxt = owner[col]
            if nxt in prev or nxt == i:
                continue
            prev[nxt] = (r, col)
            queue.append(nxt)
    return None


@dataclass(frozen=True)
class ApInput:
    confidences: Sequence[float]
    is_true_positive: Sequence[bool]
    num_ground_truth: int


def average_precision(
    confidences,
    is_tp=None,
    num_gt: int | None = None,
    interpolation: str = "all_point",
) -> float:
    """Area under the interpolated precision-recall curve.

    Detections are ranked by descending confidence; equal confidences keep
    their input order. With no ground truth the result is 1.0 when there are
    no detections either and 0.0 otherwise.

    Accepts either the three sequences or a single :class:`ApInput`.
    """
    if isinstance(confidences, ApInput):
        confidences, is_tp, num_gt = confidences.confidences, confidences.is_true_positive, confidences.num_ground_truth
    conf = np.asarray(confidences, dtype=np.float64).reshape(-1)
    tp = np.asarray(is_tp, dtype=bool).reshape(-1)
    if conf.shape != tp.shape:
        raise ValueError("confidences and is_tp must have the same length")
    if num_gt is None or num_gt < 0:
        raise ValueError("num_gt must be a non-negative count")
    if tp.sum() > num_gt:
        raise ValueError(f"{int(tp.sum())} true positives exceed {num_gt} ground-truth instances")
    if num_gt == 0:
        return 1.0 if conf.size == 0 else 0.0
    if conf.size == 0:
        return 0.0
    order = np.argsort(-conf, kind="stable")
    tp = tp[order]
    ctp = np.cumsum(tp)
    recall = ctp / num_gt
    precision = ctp / np.arange(1, len(tp) + 1)

    if interpolation == "all_point":
        # Recall steps as integer TP counts, divided once, so a perfect ranking gives exactly 1.
        mcount = np.concatenate([[0], ctp, [num_gt]])
        mpre = np.concatenate([[0.0], precision, [0.0]])
        mpre = np.maximum.accumulate(mpre[::-1])[::-1]
        idx = np.flatnonzero(mcount[1:] != mcount[:-1])
        return math.fsum((mcount[idx + 1] - mcount[idx]) * mpre[idx + 1]) / num_gt
    if interpolation in ("11_point", "101_point"):
        n = 11 if interpolation == "11_point" else 101
        env = np.maximum.accumulate(precision[::-1])[::-1]
        total = 0.0
        for r in np.linspace(0.0, 1.0, n):
            hit = np.searchsorted(recall, r, side="left")
            total += env[hit] if hit < len(env) else 0.0
        return float(total / n)
    raise ValueError(f"unknown interpolation {interpolation!r}; choose from {INTERPOLATIONS}")


def gated_matches(dist, threshold: float, pred_classes=None, gt_classes=None) -> list:
    """Match on a precomputed distance matrix; pairs farther than ``threshold`` are forbidden."""
    d = np.array(dist, dtype=np.float64)
    if d.size == 0:
        return []
    cost = np.where(d <= threshold, d, np.inf)
    if pred_classes is not None and gt_classes is not None:
        same = np.asarray(pred_classes)[:, None] == np.asarray(gt_classes)[None, :]
        cost = np.where(same, cost, np.inf)
    return hungarian_min_cost(cost).pairs


def match_at_threshold(preds: Sequence, gts: Sequence, distance_fn: Callable, threshold: float) -> list:
    """Match same-class instances whose distance is at most ``threshold``.

    Matched predictions are true positives; the rest are false positives, and
    unmatched ground truth counts as missed.
    """
    dist = np.full((len(preds), len(gts)), np.inf)
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            if p.class_id == g.class_id:
                dist[i, j] = distance_fn(p, g)
    return gated_matches(dist, threshold)
