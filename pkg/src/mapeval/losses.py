"""Forward values of the detection-head training objectives.

Nothing here computes gradients; the functions reproduce the scalar loss a
training stack would report so that targets and weightings can be checked.

Probabilities are floored at ``EPS`` inside every logarithm. The floor is
applied to the probability actually being logged (``p`` or ``1 - p``), so a
prediction equal to its binary target contributes exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assignment import hungarian_min_cost
from .core import (
    FRONT_IMAGE_SIZE,
    BevGridSpec,
    Frame,
    NUM_LINE_TYPES,
    LossWeights,
)
from .geometry import (
    direction_cosine_mismatch,
    pairwise_box_giou,
    pairwise_chamfer,
    pairwise_frechet,
    resample_polyline,
)

EPS = 1e-7
DICE_SMOOTH = 1.0


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


def _log(p):
    return np.log(np.maximum(p, EPS))


def _same_shape(a, b, what):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def focal_loss(probs, targets, params: FocalParams = FocalParams()) -> float:
    """Sigmoid focal loss averaged over all elements.

    ``targets`` is either a binary array shaped like ``probs`` or, for a 2-d
    ``probs`` of shape ``(n, num_classes)``, a length-``n`` vector of class
    indices where ``-1`` marks background (all-negative row).
    """
    p = np.asarray(probs, dtype=np.float64)
    t = np.asarray(targets)
    if p.ndim == 2 and t.ndim == 1 and len(t) == len(p) and p.shape[1] > 1:
        if np.any(t >= p.shape[1]) or np.any(t < -1):
            raise ValueError("class index out of range")
        onehot = np.zeros_like(p)
        rows = np.flatnonzero(t >= 0)
        onehot[rows, t[rows].astype(np.int64)] = 1.0
        t = onehot
    p, t = _same_shape(p, t, "focal_loss")
    if p.size == 0:
        return 0.0
    t = t.astype(np.float64)
    p_t = t * p + (1 - t) * (1 - p)
    alpha_t = t * params.alpha + (1 - t) * (1 - params.alpha)
    loss = -alpha_t * (1 - p_t) ** params.gamma * _log(p_t)
    return float(loss.mean())


def binary_cross_entropy(probs, targets) -> float:
    p, t = _same_shape(probs, targets, "binary_cross_entropy")
    if p.size == 0:
        return 0.0
    t = t.astype(np.float64)
    return float(-(t * _log(p) + (1 - t) * _log(1 - p)).mean())


def l1_reg_loss(pred_points, gt_points) -> float:
    p, g = _same_shape(pred_points, gt_points, "l1_reg_loss")
    if p.size == 0:
        return 0.0
    return float(np.abs(p - g.astype(np.float64)).mean())


def type_ce_loss(pred_type_probs, gt_types) -> float:
    """Mean negative log-probability of the true line type."""
    p = np.asarray(pred_type_probs, dtype=np.float64)
    g = np.asarray(gt_types, dtype=np.int64).reshape(-1)
    p = p.reshape(-1, p.shape[-1]) if p.size else p.reshape(0, 1)
    if len(p) != len(g):
        raise ValueError(f"type_ce_loss: {len(p)} probability rows vs {len(g)} targets")
    if len(g) == 0:
        return 0.0
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-6, rtol=0):
        raise ValueError("type probabilities must sum to 1 per row")
    return float(-_log(p[np.arange(len(g)), g]).mean()) + 0.0  # no negative zero


def mask_ce_loss(pred_mask, gt_mask) -> float:
    """Per-cell binary cross-entropy of a soft BEV mask."""
    p, g = _same_shape(pred_mask, gt_mask, "mask_ce_loss")
    if p.min(initial=0) < 0 or p.max(initial=0) > 1:
        raise ValueError("mask probabilities must lie in [0, 1]")
    return binary_cross_entropy(p, g)


def dice_loss(pred_mask, gt_mask, smooth: float = DICE_SMOOTH) -> float:
    p, g = _same_shape(pred_mask, gt_mask, "dice_loss")
    g = g.astype(np.float64)
    return float(1.0 - (2.0 * (p * g).sum() + smooth) / (p.sum() + g.sum() + smooth))


def giou_loss(pred_boxes, gt_boxes) -> float:
    """Mean ``1 - GIoU`` over aligned box pairs."""
    p, g = _same_shape(np.reshape(pred_boxes, (-1, 4)), np.reshape(gt_boxes, (-1, 4)), "giou_loss")
    if len(p) == 0:
        return 0.0
    giou = np.diagonal(pairwise_box_giou(p, g))
    return float((1.0 - giou).mean())


def box_to_cxcywh(boxes, image_size=FRONT_IMAGE_SIZE) -> np.ndarray:
    """Pixel ``(x1, y1, x2, y2)`` to normalised ``(cx, cy, w, h)``."""
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    w, h = image_size
    return np.stack([(b[:, 0] + b[:, 2]) / 2 / w, (b[:, 1] + b[:, 3]) / 2 / h,
                     (b[:, 2] - b[:, 0]) / w, (b[:, 3] - b[:, 1]) / h], axis=1)


# ---------------------------------------------------------------------------
# composite objective

COMPONENT_NAMES = {
    "ls": ("cls", "reg", "type", "mask", "dice"),
    "a": ("cls", "reg", "dir", "seg"),
    "te": ("cls", "reg", "iou"),
}


def weigh_components(components: dict, weights: LossWeights = LossWeights()) -> dict:
    """Weighted head losses from raw component values.

    ``components`` maps ``"ls"``, ``"a"`` and ``"te"`` to dicts of raw terms
    and ``"ll"``/``"lt"`` to the raw topology focal losses.
    """
    groups = {"ls": weights.lanesegment, "a": weights.area, "te": weights.traffic}
    out = {}
    for head, names in COMPONENT_NAMES.items():
        terms = components[head]
        out[f"L_{head}"] = sum(getattr(groups[head], n) * float(terms[n]) for n in names)
    out["L_ll"] = weights.topology_ll * float(components["ll"])
    out["L_lt"] = weights.topology_lt * float(components["lt"])
    out["total"] = out["L_ls"] + out["L_a"] + out["L_te"] + out["L_ll"] + out["L_lt"]
    return out


@dataclass
class LossBreakdown:
    components: dict
    weighted: dict
    weights: LossWeights = field(default_factory=LossWeights)

    @property
    def total(self) -> float:
        return self.weighted["total"]

    def rows(self):
        for head, names in COMPONENT_NAMES.items():
            for n in names:
                yield f"{head}.{n}", self.components[head][n]
            yield f"L_{head}", self.weighted[f"L_{head}"]
        yield "ll.focal", self.components["ll"]
        yield "L_ll", self.weighted["L_ll"]
        yield "lt.focal", self.components["lt"]
        yield "L_lt", self.weighted["L_lt"]
        yield "total", self.total


def _undirected(curve: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Orient ``ref`` to whichever direction of ``curve`` it is closer to."""
    fwd = np.abs(curve - ref).mean()
    rev = np.abs(curve - ref[::-1]).mean()
    return ref if fwd <= rev else ref[::-1]


def assign_frame(pred: Frame, gt: Frame, area_points: int = 20) -> dict:
    """Geometric set-prediction assignment used to supervise a frame.

    Lanes are paired on centerline Fréchet, areas on Chamfer, traffic elements
    on ``1 - GIoU``; no distance gate is applied.
    """
    out = {}
    pl, gl = pred.lane_segments, gt.lane_segments
    if pl and gl:
        d = pairwise_frechet(np.stack([x.centerline for x in pl]), np.stack([x.centerline for x in gl]))
    else:
        d = np.zeros((len(pl), len(gl)))
    out["lanes"] = hungarian_min_cost(d).pairs
    pa, ga = pred.areas, gt.areas
    if pa and ga:
        d = pairwise_chamfer(np.stack([resample_polyline(a.curve, area_points) for a in pa]),
                             np.stack([resample_polyline(a.curve, area_points) for a in ga]))
    else:
        d = np.zeros((len(pa), len(ga)))
    out["areas"] = hungarian_min_cost(d).pairs
    pt, gtt = pred.traffic_elements, gt.traffic_elements
    if pt and gtt:
        d = 1.0 - pairwise_box_giou(np.stack([t.box for t in pt]), np.stack([t.box for t in gtt]))
    else:
        d = np.zeros((len(pt), len(gtt)))
    out["traffic"] = hungarian_min_cost(d).pairs
    return out


def _require(assignment, key, needed):
    if needed and (assignment is None or key not in assignment):
        raise KeyError(f"assignment for {key!r} is required to supervise this frame")
    return [] if assignment is None else list(assignment.get(key, []))


def _soft_union(masks, confidences, shape):
    out = np.zeros(shape)
    for m, c in zip(masks, confidences):
        out = np.maximum(out, m.astype(np.float64) * c)
    return out


def _topology_target(gt_mat, row_map, col_map, shape):
    tgt = np.zeros(shape)
    for i, gi in row_map.items():
        for j, gj in col_map.items():
            tgt[i, j] = gt_mat[gi, gj]
    return tgt


def composite_losses(
    frame_pred: Frame,
    frame_gt: Frame,
    weights: LossWeights = LossWeights(),
    assignment: Optional[dict] = None,
    *,
    spec: Optional[BevGridSpec] = None,
    focal: FocalParams = FocalParams(),
    pred_masks: Optional[dict] = None,
    area_points: int = 20,
    image_size=FRONT_IMAGE_SIZE,
) -> LossBreakdown:
    """Every loss term of the lane, area, traffic and topology heads for one frame.

    ``assignment`` maps ``"lanes"``, ``"areas"`` and ``"traffic"`` to lists of
    ``(pred_index, gt_index)`` pairs (see :func:`assign_frame`). Soft BEV
    masks may be passed as ``pred_masks={"lane": ..., "area": ...}``; when
    absent they are rendered from the predicted instances, each cell taking
    the highest confidence among the instances covering it.
    """
    from .raster import area_boundary_mask, lane_segment_mask

    spec = spec or BevGridSpec()
    pl, gl = frame_pred.lane_segments, frame_gt.lane_segments
    pa, ga = frame_pred.areas, frame_gt.areas
    pt, gtt = frame_pred.traffic_elements, frame_gt.traffic_elements

    lane_pairs = _require(assignment, "lanes", bool(pl or gl))
    area_pairs = _require(assignment, "areas", bool(pa or ga))
    te_pairs = _require(assignment, "traffic", bool(pt or gtt))

    # lane segments
    matched = np.zeros(len(pl))
    for i, _ in lane_pairs:
        matched[i] = 1.0
    ls = {"cls": focal_loss([x.confidence for x in pl], matched, focal)}
    if lane_pairs:
        ls["reg"] = l1_reg_loss(np.stack([np.stack(pl[i].lines()) for i, _ in lane_pairs]),
                                np.stack([np.stack(gl[j].lines()) for _, j in lane_pairs]))
        probs, tgts = [], []
        for i, j in lane_pairs:
            p, g = pl[i], gl[j]
            if p.type_probs is not None:
                probs.extend(p.type_probs)
            else:
                probs.extend(np.eye(NUM_LINE_TYPES)[[p.left_type, p.right_type]])
            tgts.extend([g.left_type, g.right_type])
        ls["type"] = type_ce_loss(np.array(probs), np.array(tgts))
    else:
        ls["reg"] = ls["type"] = 0.0
    gt_lane_mask = np.zeros(spec.shape)
    for g in gl:
        gt_lane_mask = np.maximum(gt_lane_mask, lane_segment_mask(g, spec).grid)
    if pred_masks and "lane" in pred_masks:
        pred_lane_mask = np.asarray(pred_masks["lane"], dtype=np.float64)
    else:
        pred_lane_mask = _soft_union([lane_segment_mask(p, spec).grid for p in pl], [p.confidence for p in pl], spec.shape)
    ls["mask"] = mask_ce_loss(pred_lane_mask, gt_lane_mask)
    ls["dice"] = dice_loss(pred_lane_mask, gt_lane_mask)

    # areas
    matched = np.zeros(len(pa))
    for i, _ in area_pairs:
        matched[i] = 1.0
    a = {"cls": focal_loss([x.confidence for x in pa], matched, focal)}
    if area_pairs:
        preds_c, gts_c = [], []
        for i, j in area_pairs:
            pc = resample_polyline(pa[i].curve, area_points)
            preds_c.append(pc)
            gts_c.append(_undirected(pc, resample_polyline(ga[j].curve, area_points)))
        a["reg"] = l1_reg_loss(np.stack(preds_c), np.stack(gts_c))
        a["dir"] = float(np.mean([direction_cosine_mismatch(p, g) for p, g in zip(preds_c, gts_c)]))
    else:
        a["reg"] = a["dir"] = 0.0
    gt_area_mask = np.zeros(spec.shape)
    for g in ga:
        gt_area_mask = np.maximum(gt_area_mask, area_boundary_mask(g, spec).grid)
    if pred_masks and "area" in pred_masks:
        pred_area_mask = np.asarray(pred_masks["area"], dtype=np.float64)
    else:
        pred_area_mask = _soft_union([area_boundary_mask(p, spec).grid for p in pa], [p.confidence for p in pa], spec.shape)
    a["seg"] = mask_ce_loss(pred_area_mask, gt_area_mask)

    # traffic elements
    matched = np.zeros(len(pt))
    for i, _ in te_pairs:
        matched[i] = 1.0
    te = {"cls": focal_loss([x.confidence for x in pt], matched, focal)}
    if te_pairs:
        pb = np.stack([pt[i].box for i, _ in te_pairs])
        gb = np.stack([gtt[j].box for _, j in te_pairs])
        te["reg"] = l1_reg_loss(box_to_cxcywh(pb, image_size), box_to_cxcywh(gb, image_size))
        te["iou"] = giou_loss(pb, gb)
    else:
        te["reg"] = te["iou"] = 0.0

    # topology, supervised in prediction index space
    lane_map = dict(lane_pairs)
    te_map = dict(te_pairs)
    ll_pred = frame_pred.topology.ll_scores
    lt_pred = frame_pred.topology.lt_scores
    ll_tgt = _topology_target(frame_gt.topology.ll_scores, lane_map, lane_map, ll_pred.shape)
    lt_tgt = _topology_target(frame_gt.topology.lt_scores, lane_map, te_map, lt_pred.shape)
    ll = focal_loss(ll_pred, ll_tgt, focal)
    lt = focal_loss(lt_pred, lt_tgt, focal)

    components = {"ls": ls, "a": a, "te": te, "ll": ll, "lt": lt}
    return LossBreakdown(components, weigh_components(components, weights), weights)
