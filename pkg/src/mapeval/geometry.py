"""Distances and polyline utilities used by the metrics and losses.

Points are ``(n, 3)`` arrays. Every distance accepts ``planar=True`` to drop
the z coordinate before measuring.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class DegenerateGeometryWarning(UserWarning):
    """Raised (as a warning) when an input collapses to a point."""


def _pts(p, planar: bool = False) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected an (n, d) point array, got shape {arr.shape}")
    return arr[:, :2] if planar else arr


def _batch(p, planar: bool) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected a (k, n, d) batch of polylines, got shape {arr.shape}")
    return arr[..., :2] if planar else arr


def _cross_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Broadcasting Euclidean distance over the last axis, one coordinate at a time.
    sq = 0.0
    for k in range(a.shape[-1]):
        sq = sq + (a[..., :, None, k] - b[..., None, :, k]) ** 2
    return np.sqrt(sq)


def _frechet_table(d: np.ndarray) -> np.ndarray:
    """Coupling DP over the last two axes of a distance tensor."""
    n, m = d.shape[-2:]
    ca = np.empty_like(d)
    ca[..., 0, 0] = d[..., 0, 0]
    for j in range(1, m):
        ca[..., 0, j] = np.maximum(ca[..., 0, j - 1], d[..., 0, j])
    for i in range(1, n):
        ca[..., i, 0] = np.maximum(ca[..., i - 1, 0], d[..., i, 0])
        for j in range(1, m):
            best = np.minimum(np.minimum(ca[..., i - 1, j], ca[..., i - 1, j - 1]), ca[..., i, j - 1])
            ca[..., i, j] = np.maximum(best, d[..., i, j])
    return ca


def discrete_frechet(a, b, planar: bool = False) -> float:
    """Discrete Fréchet distance between two point sequences.

    The minimum, over monotone couplings that pair first with first and last
    with last, of the largest paired Euclidean distance.

    Raises
    ------
    ValueError
        If either sequence is empty.

    Examples
    --------
    >>> discrete_frechet([[0, 0, 0], [2, 0, 0]], [[0, 0, 0], [1, 1, 0], [2, 0, 0]])
    1.4142135623730951
    """
    a, b = _pts(a, planar), _pts(b, planar)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("discrete_frechet needs non-empty polylines")
    return float(_frechet_table(_cross_dist(a, b))[-1, -1])


def pairwise_frechet(A, B, planar: bool = False) -> np.ndarray:
    """Fréchet distance for every pair in two polyline batches, shape ``(len(A), len(B))``."""
    A, B = _batch(A, planar), _batch(B, planar)
    if len(A) == 0 or len(B) == 0:
        return np.zeros((len(A), len(B)))
    d = _cross_dist(A[:, None], B[None, :])
    return _frechet_table(d)[..., -1, -1]


def paired_frechet(A, B, planar: bool = False) -> np.ndarray:
    """Fréchet distance between ``A[k]`` and ``B[k]`` for every k."""
    A, B = _batch(A, planar), _batch(B, planar)
    if len(A) != len(B):
        raise ValueError("paired_frechet needs batches of equal length")
    if len(A) == 0:
        return np.zeros(0)
    return _frechet_table(_cross_dist(A, B))[..., -1, -1]


@dataclass(frozen=True)
class DirectedChamferResult:
    forward: float
    backward: float
    symmetric: float


def chamfer(a, b, planar: bool = False) -> DirectedChamferResult:
    """Mean nearest-neighbour distance in both directions plus their average."""
    a, b = _pts(a, planar), _pts(b, planar)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer needs non-empty point sets")
    d = _cross_dist(a, b)
    fwd = float(d.min(axis=1).mean())
    bwd = float(d.min(axis=0).mean())
    return DirectedChamferResult(fwd, bwd, (fwd + bwd) / 2)


def pairwise_chamfer(A, B, planar: bool = False, chunk: int = 64) -> np.ndarray:
    """Symmetric Chamfer distance for every pair of point sets in two batches."""
    A, B = _batch(A, planar), _batch(B, planar)
    out = np.zeros((len(A), len(B)))
    if len(A) == 0 or len(B) == 0:
        return out
    for s in range(0, len(A), chunk):
        d = _cross_dist(A[s : s + chunk, None], B[None, :])
        out[s : s + chunk] = (d.min(axis=-1).mean(axis=-1) + d.min(axis=-2).mean(axis=-1)) / 2
    return out


def paired_chamfer(A, B, planar: bool = False) -> np.ndarray:
    """Symmetric Chamfer distance between ``A[k]`` and ``B[k]`` for every k."""
    A, B = _batch(A, planar), _batch(B, planar)
    if len(A) != len(B):
        raise ValueError("paired_chamfer needs batches of equal length")
    if len(A) == 0:
        return np.zeros(0)
    d = _cross_dist(A, B)
    return (d.min(axis=-1).mean(axis=-1) + d.min(axis=-2).mean(axis=-1)) / 2


def box_gap(lo_a, hi_a, lo_b, hi_b) -> np.ndarray:
    """Distance between axis-aligned boxes for every pair, shape ``(len(lo_a), len(lo_b))``.

    No point of one box is closer than this to any point of the other, so
    the gap is a lower bound for every distance built from point pairs.
    """
    lo_a, hi_a = np.asarray(lo_a, float)[:, None], np.asarray(hi_a, float)[:, None]
    lo_b, hi_b = np.asarray(lo_b, float)[None], np.asarray(hi_b, float)[None]
    sep = np.maximum(0.0, np.maximum(lo_b - hi_a, lo_a - hi_b))
    return np.sqrt((sep**2).sum(-1))


def directed_hausdorff(a, b, planar: bool = False) -> float:
    """Largest distance from a point of ``a`` to its nearest point of ``b``."""
    d = _cross_dist(_pts(a, planar), _pts(b, planar))
    return float(d.min(axis=1).max())


def polyline_length(p) -> float:
    p = _pts(p)
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


def resample_polyline(p, n: int) -> np.ndarray:
    """Resample ``p`` to ``n`` points equally spaced in arc length.

    Endpoints are preserved exactly. A polyline of zero length yields ``n``
    copies of its first point and emits :class:`DegenerateGeometryWarning`.
    """
    p = _pts(p)
    if len(p) < 2 or n < 2:
        raise ValueError("resample_polyline needs >= 2 input points and n >= 2")
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0:
        warnings.warn("zero-length polyline resampled to a single point", DegenerateGeometryWarning, stacklevel=2)
        return np.repeat(p[:1], n, axis=0)
    targets = np.linspace(0.0, total, n)
    # Drop zero-length pieces so np.interp sees strictly increasing abscissae.
    keep = np.concatenate([[True], seg > 0])
    s, q = s[keep], p[keep]
    out = np.stack([np.interp(targets, s, q[:, k]) for k in range(p.shape[1])], axis=1)
    out[0], out[-1] = p[0], p[-1]
    return out


def _check_box(box) -> np.ndarray:
    b = np.asarray(box, dtype=np.float64)
    if b.shape != (4,) or not (b[0] < b[2] and b[1] < b[3]):
        raise ValueError(f"invalid box {box!r}: need x1 < x2 and y1 < y2")
    return b


def _area(b: np.ndarray) -> np.ndarray:
    return (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])


def box_iou(a, b) -> float:
    a, b = _check_box(a), _check_box(b)
    return float(pairwise_box_iou(a[None], b[None])[0, 0])


def box_giou(a, b) -> float:
    """Generalized IoU: IoU minus the empty fraction of the enclosing box."""
    a, b = _check_box(a), _check_box(b)
    return float(pairwise_box_giou(a[None], b[None])[0, 0])


def _inter_union(A: np.ndarray, B: np.ndarray):
    lt = np.maximum(A[:, None, :2], B[None, :, :2])
    rb = np.minimum(A[:, None, 2:], B[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = _area(A)[:, None] + _area(B)[None, :] - inter
    return inter, union


def pairwise_box_iou(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64).reshape(-1, 4)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 4)
    inter, union = _inter_union(A, B)
    return inter / union


def pairwise_box_giou(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64).reshape(-1, 4)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 4)
    inter, union = _inter_union(A, B)
    lt = np.minimum(A[:, None, :2], B[None, :, :2])
    rb = np.maximum(A[:, None, 2:], B[None, :, 2:])
    hull = (rb[..., 0] - lt[..., 0]) * (rb[..., 1] - lt[..., 1])
    return inter / union - (hull - union) / hull


def direction_cosine_mismatch(pred, gt, return_degenerate: bool = False):
    """Mean of ``1 - cos`` between matching edges of two polylines.

    Edges of zero length on either side contribute 0 to the mean; with
    ``return_degenerate=True`` the number of such edges is returned as well.
    """
    pred, gt = _pts(pred), _pts(gt)
    if pred.shape != gt.shape or len(pred) < 2:
        raise ValueError("direction_cosine_mismatch needs equal point counts >= 2")
    ep, eg = np.diff(pred, axis=0), np.diff(gt, axis=0)
    np_, ng = np.linalg.norm(ep, axis=1), np.linalg.norm(eg, axis=1)
    ok = (np_ > 0) & (ng > 0)
    cos = np.zeros(len(ep))
    cos[ok] = (ep[ok] * eg[ok]).sum(1) / (np_[ok] * ng[ok])
    terms = np.where(ok, 1.0 - np.clip(cos, -1.0, 1.0), 0.0)
    value = float(terms.mean())
    if return_degenerate:
        return value, int((~ok).sum())
    return value
