"""Detection and topology metrics and their OLUS aggregate.

Each metric is evaluated over a dataset of aligned (prediction, ground truth)
frames. Matching is done per frame; matched/unmatched flags are then pooled
over the dataset per class and threshold before average precision is taken,
so AP is a dataset-level quantity. Topology metrics average a per-vertex AP
over all ground-truth lanes that have at least one outgoing edge.
"""

from __future__ import annotations

import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .assignment import INTERPOLATIONS, average_precision, gated_matches, hungarian_min_cost
from .core import Frame, MetricsReport, olus
from .geometry import box_gap, paired_chamfer, paired_frechet, pairwise_box_iou, resample_polyline

__all__ = [
    "MetricConfig",
    "DetResult",
    "FrameAlignmentError",
    "det_l",
    "det_a",
    "det_t",
    "top_ll",
    "top_lt",
    "olus",
    "evaluate",
]


class FrameAlignmentError(ValueError):
    """Prediction and ground-truth frames do not line up."""


def _check_thresholds(name, values):
    if len(values) == 0:
        raise ValueError(f"{name} must not be empty")
    if any(v <= 0 for v in values) or any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be positive and strictly increasing, got {values}")


@dataclass(frozen=True)
class MetricConfig:
    frechet_thresholds: tuple = (1.0, 2.0, 3.0)
    chamfer_thresholds: tuple = (0.5, 1.0, 1.5)
    iou_thresholds: tuple = (0.75,)
    topology_frechet_threshold: float = 2.0
    topology_iou_threshold: float = 0.75
    interpolation: str = "all_point"
    # "exclude": classes without ground truth are left out of the class mean.
    # "penalize": classes with predictions but no ground truth score 0.
    vacuous_policy: str = "exclude"
    # "mean": DET_l averages the Fréchet and Chamfer AP families.
    # "composite": one AP family, a match must pass both gates (paired thresholds).
    det_l_combination: str = "mean"
    area_resample_points: int = 100
    planar: bool = False

    def __post_init__(self):
        for name in ("frechet_thresholds", "chamfer_thresholds", "iou_thresholds"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            _check_thresholds(name, vals)
        if any(v > 1 for v in self.iou_thresholds):
            raise ValueError("iou_thresholds must lie in (0, 1]")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
        if self.vacuous_policy not in ("exclude", "penalize"):
            raise ValueError("vacuous_policy must be 'exclude' or 'penalize'")
        if self.det_l_combination not in ("mean", "composite"):
            raise ValueError("det_l_combination must be 'mean' or 'composite'")
        if self.det_l_combination == "composite" and len(self.frechet_thresholds) != len(self.chamfer_thresholds):
            raise ValueError("composite DET_l pairs thresholds; both lists need equal length")
        if self.area_resample_points < 2:
            raise ValueError("area_resample_points must be >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


@dataclass
class DetResult:
    value: float
    per_class: dict = field(default_factory=dict)
    per_threshold: dict = field(default_factory=dict)


def align_frames(preds: Sequence[Frame], gts: Sequence[Frame]) -> list:
    if len(preds) != len(gts):
        raise FrameAlignmentError(f"{len(preds)} prediction frames vs {len(gts)} ground-truth frames")
    for i, (p, g) in enumerate(zip(preds, gts)):
        if p.frame_id != g.frame_id:
            raise FrameAlignmentError(f"frame {i}: prediction id {p.frame_id!r} != ground truth id {g.frame_id!r}")
    return list(zip(preds, gts))


# ---------------------------------------------------------------------------
# per-frame matching


def _rank(instances):
    conf = np.array([it.confidence for it in instances], dtype=np.float64)
    return np.argsort(-conf, kind="stable")


def _lines(lanes, attr):
    if not lanes:
        return np.zeros((0, 1, 3))
    return np.stack([getattr(ls, attr) for ls in lanes])


def _classes(instances):
    return np.array([it.class_id for it in instances], dtype=np.int64)


def _records(key_prefix, preds, gts, matches_by_thr, out):
    """Append (confidence, tp, num_gt) per class and threshold."""
    pcls, gcls = _classes(preds), _classes(gts)
    conf = np.array([p.confidence for p in preds], dtype=np.float64)
    for thr, matches in matches_by_thr.items():
        tp = np.zeros(len(preds), dtype=bool)
        for i, _ in matches:
            tp[i] = True
        for c in set(pcls.tolist()) | set(gcls.tolist()):
            sel = pcls == c
            out.setdefault((key_prefix, c, thr), []).append((conf[sel], tp[sel], int((gcls == c).sum())))


def _hull(lanes, planar):
    pts = np.concatenate([_lines(lanes, a) for a in ("centerline", "left_boundary", "right_boundary")], axis=1)
    pts = pts[..., :2] if planar else pts
    return pts.min(axis=1), pts.max(axis=1)


def _lane_distances(preds, gts, cfg):
    """Centerline Fréchet and mean boundary Chamfer for every (pred, gt) pair.

    Pairs whose bounding boxes are further apart than every threshold in use
    cannot match at any of them and are reported as ``inf``.
    """
    fre = np.full((len(preds), len(gts)), np.inf)
    cha = np.full((len(preds), len(gts)), np.inf)
    if not preds or not gts:
        return fre, cha
    reach = max(*cfg.frechet_thresholds, *cfg.chamfer_thresholds, cfg.topology_frechet_threshold)
    i, j = np.nonzero(box_gap(*_hull(preds, cfg.planar), *_hull(gts, cfg.planar)) <= reach)
    p = {a: _lines(preds, a)[i] for a in ("centerline", "left_boundary", "right_boundary")}
    g = {a: _lines(gts, a)[j] for a in ("centerline", "left_boundary", "right_boundary")}
    fre[i, j] = paired_frechet(p["centerline"], g["centerline"], cfg.planar)
    left = paired_chamfer(p["left_boundary"], g["left_boundary"], cfg.planar)
    right = paired_chamfer(p["right_boundary"], g["right_boundary"], cfg.planar)
    cha[i, j] = (left + right) / 2
    return fre, cha


def _area_distances(preds, gts, cfg):
    """Chamfer between resampled area curves; pairs beyond every threshold are ``inf``."""
    d = np.full((len(preds), len(gts)), np.inf)
    if not preds or not gts:
        return d
    k = 2 if cfg.planar else 3

    def box(areas):
        return (np.array([a.curve[:, :k].min(axis=0) for a in areas]),
                np.array([a.curve[:, :k].max(axis=0) for a in areas]))

    # Resampled points stay on the curve, so the vertex boxes bound them.
    i, j = np.nonzero(box_gap(*box(preds), *box(gts)) <= max(cfg.chamfer_thresholds))
    if len(i):
        n = cfg.area_resample_points
        pc = {u: resample_polyline(preds[u].curve, n) for u in np.unique(i)}
        gc = {v: resample_polyline(gts[v].curve, n) for v in np.unique(j)}
        d[i, j] = paired_chamfer(np.stack([pc[u] for u in i]), np.stack([gc[v] for v in j]), cfg.planar)
    return d


def _iou_matches(iou, thr, pcls, gcls):
    cost = np.where((iou >= thr) & (pcls[:, None] == gcls[None, :]), 1.0 - iou, np.inf)
    return hungarian_min_cost(cost).pairs


def _vertex_aps(proj: np.ndarray, target: np.ndarray, exclude_diag: bool, interpolation: str):
    aps = []
    for i in range(target.shape[0]):
        keep = np.ones(target.shape[1], dtype=bool)
        if exclude_diag:
            keep[i] = False
        t = target[i, keep] > 0.5
        if not t.any():
            continue
        s = proj[i, keep]
        det = s > 0
        aps.append(average_precision(s[det], t[det], int(t.sum()), interpolation))
    return aps


def _check_topology(frame: Frame, side: str) -> None:
    n_lane, n_te = len(frame.lane_segments), len(frame.traffic_elements)
    ll, lt = frame.topology.ll_scores.shape, frame.topology.lt_scores.shape
    if ll != (n_lane, n_lane) or lt != (n_lane, n_te):
        raise ValueError(
            f"{side} frame {frame.frame_id!r}: topology shapes ll {ll}, lt {lt} do not fit "
            f"{n_lane} lanes and {n_te} traffic elements"
        )


def _frame_records(pair, cfg: MetricConfig, parts: frozenset) -> dict:
    pred, gt = pair
    if "top_ll" in parts or "top_lt" in parts:
        _check_topology(pred, "prediction")
        _check_topology(gt, "ground truth")
    out: dict = {}
    lane_order = _rank(pred.lane_segments)
    plane = [pred.lane_segments[i] for i in lane_order]
    glane = list(gt.lane_segments)
    need_lane_dist = "det_l" in parts or "top_ll" in parts or "top_lt" in parts
    if need_lane_dist:
        fre, cha = _lane_distances(plane, glane, cfg)
        same = _classes(plane)[:, None] == _classes(glane)[None, :]
    if "det_l" in parts:
        if cfg.det_l_combination == "mean":
            m_f = {t: gated_matches(np.where(same, fre, np.inf), t) for t in cfg.frechet_thresholds}
            m_c = {t: gated_matches(np.where(same, cha, np.inf), t) for t in cfg.chamfer_thresholds}
            _records("frechet", plane, glane, m_f, out)
            _records("chamfer", plane, glane, m_c, out)
        else:
            m = {}
            for tf, tc in zip(cfg.frechet_thresholds, cfg.chamfer_thresholds):
                m[tf] = gated_matches(np.where(same & (cha <= tc), fre, np.inf), tf)
            _records("composite", plane, glane, m, out)

    if "det_a" in parts:
        order = _rank(pred.areas)
        pa = [pred.areas[i] for i in order]
        ga = list(gt.areas)
        d = _area_distances(pa, ga, cfg)
        same_a = _classes(pa)[:, None] == _classes(ga)[None, :]
        m = {t: gated_matches(np.where(same_a, d, np.inf), t) for t in cfg.chamfer_thresholds}
        _records("area", pa, ga, m, out)

    te_order = _rank(pred.traffic_elements)
    pte = [pred.traffic_elements[i] for i in te_order]
    gte = list(gt.traffic_elements)
    need_te = "det_t" in parts or "top_lt" in parts
    if need_te:
        pboxes = np.array([t.box for t in pte]).reshape(-1, 4)
        gboxes = np.array([t.box for t in gte]).reshape(-1, 4)
        iou = pairwise_box_iou(pboxes, gboxes) if len(pte) and len(gte) else np.zeros((len(pte), len(gte)))
        pc, gc = _classes(pte), _classes(gte)
    if "det_t" in parts:
        m = {t: _iou_matches(iou, t, pc, gc) for t in cfg.iou_thresholds}
        _records("traffic", pte, gte, m, out)

    if "top_ll" in parts or "top_lt" in parts:
        lane_pairs = gated_matches(np.where(same, fre, np.inf), cfg.topology_frechet_threshold)
        # Map ground-truth lane -> index in the original prediction order.
        lane_map = {g: int(lane_order[p]) for p, g in lane_pairs}
        gl = np.array([lane_map.get(j, -1) for j in range(len(glane))], dtype=np.int64)
        if "top_ll" in parts:
            proj = _project(pred.topology.ll_scores, gl, gl)
            out["top_ll"] = (_vertex_aps(proj, gt.topology.ll_scores, True, cfg.interpolation), int((proj > 0).sum()))
        if "top_lt" in parts:
            te_pairs = _iou_matches(iou, cfg.topology_iou_threshold, pc, gc)
            te_map = {g: int(te_order[p]) for p, g in te_pairs}
            gt_te = np.array([te_map.get(j, -1) for j in range(len(gte))], dtype=np.int64)
            proj = _project(pred.topology.lt_scores, gl, gt_te)
            out["top_lt"] = (_vertex_aps(proj, gt.topology.lt_scores, False, cfg.interpolation), int((proj > 0).sum()))
    return out


def _project(scores: np.ndarray, row_map: np.ndarray, col_map: np.ndarray) -> np.ndarray:
    """Re-index predicted scores into ground-truth index space; unmatched -> 0."""
    proj = np.zeros((len(row_map), len(col_map)))
    if proj.size == 0:
        return proj
    r_ok, c_ok = row_map >= 0, col_map >= 0
    sub = scores[np.ix_(row_map[r_ok], col_map[c_ok])]
    proj[np.ix_(r_ok, c_ok)] = sub
    return proj


def _collect(preds, gts, cfg, parts, workers=1) -> list:
    pairs = align_frames(preds, gts)
    fn = functools.partial(_frame_records, cfg=cfg, parts=frozenset(parts))
    if workers > 1 and len(pairs) > 1:
        chunk = max(1, len(pairs) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, pairs, chunksize=chunk))
    return [fn(p) for p in pairs]


# ---------------------------------------------------------------------------
# aggregation


def _aggregate_det(frames_out, family, thresholds, cfg, label) -> DetResult:
    pooled: dict = {}
    for rec in frames_out:
        for key, items in rec.items():
            if isinstance(key, tuple) and key[0] == family:
                pooled.setdefault(key[1:], []).extend(items)
    gt_count: dict = {}
    pred_count: dict = {}
    for (c, thr), items in pooled.items():
        if thr != thresholds[0]:
            continue
        gt_count[c] = gt_count.get(c, 0) + sum(n for _, _, n in items)
        pred_count[c] = pred_count.get(c, 0) + sum(len(conf) for conf, _, _ in items)
    classes = sorted(c for c, n in gt_count.items() if n > 0)
    if cfg.vacuous_policy == "penalize":
        classes = sorted(set(classes) | {c for c, n in pred_count.items() if n > 0})
    if not classes:
        value = 1.0 if sum(pred_count.values()) == 0 else 0.0
        return DetResult(value)
    per_class, per_threshold = {}, {}
    ap_table = np.zeros((len(classes), len(thresholds)))
    for ci, c in enumerate(classes):
        for ti, thr in enumerate(thresholds):
            items = pooled.get((c, thr), [])
            conf = np.concatenate([x[0] for x in items]) if items else np.zeros(0)
            tp = np.concatenate([x[1] for x in items]) if items else np.zeros(0, dtype=bool)
            n = sum(x[2] for x in items)
            ap_table[ci, ti] = average_precision(conf, tp, n, cfg.interpolation)
        per_class[f"{label}/class_{c}"] = float(ap_table[ci].mean())
    for ti, thr in enumerate(thresholds):
        per_threshold[f"{label}@{thr:g}"] = float(ap_table[:, ti].mean())
    return DetResult(float(ap_table.mean(axis=1).mean()), per_class, per_threshold)


def _aggregate_top(frames_out, key) -> float:
    aps, positives = [], 0
    for rec in frames_out:
        v, p = rec[key]
        aps.extend(v)
        positives += p
    if not aps:
        return 1.0 if positives == 0 else 0.0
    return float(np.mean(aps))


def _det_l_from(frames_out, cfg) -> DetResult:
    if cfg.det_l_combination == "composite":
        return _aggregate_det(frames_out, "composite", cfg.frechet_thresholds, cfg, "det_l/composite")
    f = _aggregate_det(frames_out, "frechet", cfg.frechet_thresholds, cfg, "det_l/frechet")
    c = _aggregate_det(frames_out, "chamfer", cfg.chamfer_thresholds, cfg, "det_l/chamfer")
    return DetResult(
        (f.value + c.value) / 2,
        {**f.per_class, **c.per_class, "det_l/frechet": f.value, "det_l/chamfer": c.value},
        {**f.per_threshold, **c.per_threshold},
    )


def det_l(preds, gts, cfg: Optional[MetricConfig] = None) -> DetResult:
    """Lane-segment mAP: centerline Fréchet family and boundary Chamfer family."""
    cfg = cfg or MetricConfig()
    return _det_l_from(_collect(preds, gts, cfg, {"det_l"}), cfg)


def det_a(preds, gts, cfg: Optional[MetricConfig] = None) -> DetResult:
    """Area mAP with symmetric Chamfer on resampled curves."""
    cfg = cfg or MetricConfig()
    return _aggregate_det(_collect(preds, gts, cfg, {"det_a"}), "area", cfg.chamfer_thresholds, cfg, "det_a")


def det_t(preds, gts, cfg: Optional[MetricConfig] = None) -> DetResult:
    """Traffic-element mAP gated by box IoU."""
    cfg = cfg or MetricConfig()
    return _aggregate_det(_collect(preds, gts, cfg, {"det_t"}), "traffic", cfg.iou_thresholds, cfg, "det_t")


def top_ll(preds, gts, cfg: Optional[MetricConfig] = None) -> float:
    """Lane-lane topology mAP over ground-truth vertices with outgoing edges."""
    cfg = cfg or MetricConfig()
    return _aggregate_top(_collect(preds, gts, cfg, {"top_ll"}), "top_ll")


def top_lt(preds, gts, cfg: Optional[MetricConfig] = None) -> float:
    """Lane-traffic topology mAP over ground-truth lanes with traffic associations."""
    cfg = cfg or MetricConfig()
    return _aggregate_top(_collect(preds, gts, cfg, {"top_lt"}), "top_lt")


def evaluate(preds, gts, cfg: Optional[MetricConfig] = None, workers: int = 1) -> MetricsReport:
    """Compute all five sub-metrics and OLUS in a single pass over the frames."""
    cfg = cfg or MetricConfig()
    if workers < 1:
        raise ValueError("workers must be >= 1")
    frames_out = _collect(preds, gts, cfg, {"det_l", "det_a", "det_t", "top_ll", "top_lt"}, workers)
    dl = _det_l_from(frames_out, cfg)
    da = _aggregate_det(frames_out, "area", cfg.chamfer_thresholds, cfg, "det_a")
    dt = _aggregate_det(frames_out, "traffic", cfg.iou_thresholds, cfg, "det_t")
    tll = _aggregate_top(frames_out, "top_ll")
    tlt = _aggregate_top(frames_out, "top_lt")
    per_class = {**dl.per_class, **da.per_class, **dt.per_class}
    per_threshold = {**dl.per_threshold, **da.per_threshold, **dt.per_threshold}
    return MetricsReport.from_components(
        dl.value, da.value, dt.value, tll, tlt,
        per_class=dict(sorted(per_class.items())),
        per_threshold=dict(sorted(per_threshold.items())),
        config=cfg.to_dict(),
    )
