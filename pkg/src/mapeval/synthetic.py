"""Deterministic synthetic scenes with closed-form metric outcomes.

Scenes are built so that distinct ground-truth instances are far apart
relative to the default matching thresholds: parallel lane chains are spaced
more than 3.5 m apart, crossings and road-boundary pieces sit in disjoint
slots, and traffic-element boxes occupy disjoint image tiles. That makes the
effect of dropping, offsetting or zeroing predictions computable by hand,
which :func:`perturb` records in an :class:`ExpectedOutcome`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    NUM_POINTS,
    NUM_TRAFFIC_CLASSES,
    PEDESTRIAN_CROSSING,
    ROAD_BOUNDARY,
    AreaInstance,
    FrameGroundTruth,
    FramePrediction,
    LaneSegment,
    TopologyPrediction,
    TrafficElement,
    olus,
)
from .metrics import MetricConfig
from .raster import SdMap
from .scene_io import SceneArchive

LANES_PER_CHAIN = 4
HALF_WIDTH = 1.75
MAX_CHAINS = 11
MAX_CROSSINGS = 8
MAX_BOUNDARIES = 8
TE_GRID = (5, 4)  # tiles across, tiles down in the upper image region
TE_TILE = (300, 280)


def _chain_sizes(n_lanes):
    n_chains = math.ceil(n_lanes / LANES_PER_CHAIN)
    sizes = [n_lanes // n_chains] * n_chains if n_chains else []
    for k in range(n_lanes - sum(sizes)):
        sizes[k] += 1
    return sizes


def _path(s, offset, kappa):
    """Points at arclength ``s`` along a reference arc through the origin, shifted ``offset`` to the left."""
    if kappa == 0:
        x = np.asarray(s, dtype=np.float64)
        y = np.full_like(x, offset)
    else:
        th = kappa * np.asarray(s, dtype=np.float64)
        x = np.sin(th) / kappa - offset * np.sin(th)
        y = (1 - np.cos(th)) / kappa + offset * np.cos(th)
    return np.stack([x, y, np.zeros_like(x)], axis=1)


def _lanes(rng, n_lanes, layout):
    sizes = _chain_sizes(n_lanes)
    if len(sizes) > MAX_CHAINS:
        raise ValueError(f"at most {MAX_CHAINS * LANES_PER_CHAIN} lanes fit in the BEV window")
    if layout not in ("straight", "arc"):
        raise ValueError(f"unknown layout {layout!r}")
    lane_len = float(rng.uniform(12.0, 20.0))
    spacing = 3.5 + rng.uniform(0.2, 0.8, size=len(sizes))
    offsets = np.concatenate([[0.0], np.cumsum(spacing[1:])]) if sizes else np.zeros(0)
    if len(offsets):
        offsets -= (offsets[0] + offsets[-1]) / 2
    kappa = 0.0
    if layout == "arc":
        # Lateral drift of the arc must fit in what the outermost chain leaves free.
        room = 24.5 - HALF_WIDTH - float(np.abs(offsets).max(initial=0.0))
        half_len = max(sizes, default=1) * lane_len / 2
        k_max = min(1 / 150, 2 * room / half_len**2)
        kappa = float(rng.uniform(k_max / 3, k_max) * rng.choice([-1, 1]))

    lanes, chains = [], []
    for size, off in zip(sizes, offsets):
        s0 = -size * lane_len / 2
        idx = []
        for k in range(size):
            s = np.linspace(s0 + k * lane_len, s0 + (k + 1) * lane_len, NUM_POINTS)
            lanes.append(LaneSegment(
                id=f"lane{len(lanes)}",
                centerline=_path(s, off, kappa),
                left_boundary=_path(s, off + HALF_WIDTH, kappa),
                right_boundary=_path(s, off - HALF_WIDTH, kappa),
                left_type=int(rng.integers(1, 3)),
                right_type=int(rng.integers(1, 3)),
            ))
            idx.append(len(lanes) - 1)
        chains.append((idx, off, s0, size * lane_len))
    return lanes, chains, kappa


def _crossing(rng, slot, tag):
    xc = -44.0 + 11.0 * slot
    half_w = float(rng.uniform(4.0, 10.0))
    depth = float(rng.uniform(3.0, 5.0))
    corners = [(xc - depth / 2, -half_w), (xc + depth / 2, -half_w), (xc + depth / 2, half_w),
               (xc - depth / 2, half_w), (xc - depth / 2, -half_w)]
    return AreaInstance(tag, [(x, y, 0.0) for x, y in corners], PEDESTRIAN_CROSSING)


def _boundary(rng, slot, tag):
    side = 1.0 if slot % 2 == 0 else -1.0
    x0 = -48.0 + 22.0 * (slot // 2)
    xs = np.linspace(x0, x0 + 18.0, 6)
    ys = side * (23.5 + rng.uniform(-0.4, 0.4, size=6))
    return AreaInstance(tag, np.stack([xs, ys, np.zeros(6)], axis=1), ROAD_BOUNDARY)


def _traffic(rng, slot, tag):
    col, row = slot % TE_GRID[0], slot // TE_GRID[0]
    w, h = rng.uniform(40, 200), rng.uniform(40, 200)
    x1 = 10 + col * TE_TILE[0] + rng.uniform(0, TE_TILE[0] - w - 20)
    y1 = 10 + row * TE_TILE[1] + rng.uniform(0, TE_TILE[1] - h - 20)
    return TrafficElement(tag, [x1, y1, x1 + w, y1 + h], int(rng.integers(0, NUM_TRAFFIC_CLASSES)))


def generate_scene(
    n_lanes: int = 6,
    n_areas: int = 4,
    n_tes: int = 3,
    layout: str = "straight",
    seed: int = 0,
    n_frames: int = 1,
    scene_id: Optional[str] = None,
) -> SceneArchive:
    """Build a ground-truth scene.

    Lanes form chains of up to four consecutive segments (lane-lane edges run
    ``i -> i+1`` inside a chain); traffic element ``k`` is attached to the
    first lane of chain ``k mod n_chains``. Areas alternate between
    pedestrian crossings and road-boundary pieces. ``layout`` is
    ``"straight"`` or ``"arc"`` (concentric arcs, still evenly sampled).
    Each frame also carries an SD map made of the coarse chain centerlines.
    """
    if min(n_lanes, n_areas, n_tes, n_frames) < 0:
        raise ValueError("counts must be >= 0")
    n_cross = (n_areas + 1) // 2
    if n_cross > MAX_CROSSINGS or n_areas - n_cross > MAX_BOUNDARIES:
        raise ValueError(f"at most {MAX_CROSSINGS + MAX_BOUNDARIES} areas fit the layout")
    if n_tes > TE_GRID[0] * TE_GRID[1]:
        raise ValueError(f"at most {TE_GRID[0] * TE_GRID[1]} traffic elements fit the layout")
    scene_id = scene_id if scene_id is not None else f"synthetic-{seed}"
    frames, sd_maps = [], {}
    for fi in range(n_frames):
        rng = np.random.default_rng([seed, fi])
        frame_id = f"{fi:06d}"
        lanes, chains, kappa = _lanes(rng, n_lanes, layout)
        heads = [idx[0] for idx, *_ in chains]
        areas = []
        for i in range(n_areas):
            if i % 2 == 0:
                areas.append(_crossing(rng, i // 2, f"area{i}"))
            else:
                areas.append(_boundary(rng, i // 2, f"area{i}"))
        tes = [_traffic(rng, k, f"te{k}") for k in range(n_tes)]
        ll = np.zeros((len(lanes), len(lanes)))
        for idx, *_ in chains:
            for a, b in zip(idx, idx[1:]):
                ll[a, b] = 1.0
        lt = np.zeros((len(lanes), len(tes)))
        if heads:
            for k in range(len(tes)):
                lt[heads[k % len(heads)], k] = 1.0
        frames.append(FrameGroundTruth(frame_id, lanes, areas, tes, TopologyPrediction(ll, lt)))
        polys = []
        for idx, off, s0, length in chains:
            pts = _path(np.linspace(s0, s0 + length, 5), off, kappa)
            polys.append((pts, int(rng.integers(0, 3))))
        sd_maps[frame_id] = SdMap(tuple(polys))
    return SceneArchive(scene_id, frames, sd_maps, "scene")


# ---------------------------------------------------------------------------
# perturbation


@dataclass(frozen=True)
class PerturbationSpec:
    point_jitter_sigma: float = 0.0
    drop_rate: float = 0.0
    false_positive_count: int = 0
    confidence_noise: float = 0.0
    topology_flip_rate: float = 0.0
    seed: int = 0
    # "rigid": one random translation per instance; "noisy": independent per point.
    jitter_mode: str = "rigid"
    # Exact translation applied to every predicted lane centerline.
    rigid_offset: Optional[tuple] = None
    offset_boundaries: bool = False
    zeroed_ll_edges: int = 0
    zeroed_lt_edges: int = 0

    def __post_init__(self):
        for name in ("drop_rate", "confidence_noise", "topology_flip_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.point_jitter_sigma < 0:
            raise ValueError("point_jitter_sigma must be >= 0")
        if min(self.false_positive_count, self.zeroed_ll_edges, self.zeroed_lt_edges) < 0:
            raise ValueError("counts must be >= 0")
        if self.jitter_mode not in ("rigid", "noisy"):
            raise ValueError("jitter_mode must be 'rigid' or 'noisy'")


@dataclass
class ExpectedOutcome:
    """Metric values forced by construction; ``None`` where the outcome is not closed-form."""

    det_l: Optional[float] = None
    det_a: Optional[float] = None
    det_t: Optional[float] = None
    top_ll: Optional[float] = None
    top_lt: Optional[float] = None
    olus: Optional[float] = None
    frechet_family: Optional[float] = None
    chamfer_family: Optional[float] = None
    dropped: dict = field(default_factory=dict)


def _pick(rng, population, k):
    if k <= 0 or not population:
        return set()
    idx = rng.choice(len(population), size=min(k, len(population)), replace=False)
    return {population[i] for i in sorted(idx.tolist())}


def _fp_lane(rng, k, tag):
    y = -20.0 + 5.0 * (k % 9)
    x0 = 43.0
    s = np.linspace(0, 7.0, NUM_POINTS)
    return LaneSegment(
        tag,
        np.stack([x0 + s, np.full_like(s, y), np.zeros_like(s)], axis=1),
        np.stack([x0 + s, np.full_like(s, y + HALF_WIDTH), np.zeros_like(s)], axis=1),
        np.stack([x0 + s, np.full_like(s, y - HALF_WIDTH), np.zeros_like(s)], axis=1),
        left_type=1, right_type=1, confidence=float(rng.uniform(0.0, 0.05)),
    )


def _fp_area(rng, k, tag):
    y0 = -15.0 + 6.0 * (k % 6)
    pts = [(44.0, y0), (48.0, y0), (48.0, y0 + 4.0), (44.0, y0 + 4.0), (44.0, y0)]
    return AreaInstance(tag, [(x, y, 0.0) for x, y in pts], int(k % 2), float(rng.uniform(0.0, 0.05)))


def _fp_te(rng, k, tag):
    x1 = 20.0 + 140.0 * (k % 10)
    y1 = 1700.0 + 150.0 * ((k // 10) % 2)
    return TrafficElement(tag, [x1, y1, x1 + 100.0, y1 + 100.0], int(rng.integers(0, NUM_TRAFFIC_CLASSES)),
                          float(rng.uniform(0.0, 0.05)))


def _class_recall(instances_by_frame, dropped):
    """Mean over classes of the surviving fraction, or ``None`` if there is no ground truth."""
    total, kept = {}, {}
    for fi, insts in enumerate(instances_by_frame):
        for ii, it in enumerate(insts):
            total[it.class_id] = total.get(it.class_id, 0) + 1
            kept[it.class_id] = kept.get(it.class_id, 0) + ((fi, ii) not in dropped)
    if not total:
        return None
    return float(np.mean([kept[c] / total[c] for c in sorted(total)]))


def perturb(archive: SceneArchive, spec: PerturbationSpec = PerturbationSpec(),
            cfg: Optional[MetricConfig] = None) -> tuple[SceneArchive, ExpectedOutcome]:
    """Derive a prediction archive from ground truth and summarise the forced outcome."""
    cfg = cfg or MetricConfig()
    rng = np.random.default_rng([spec.seed, 7919])
    frames = archive.frames

    def population(attr):
        return [(fi, ii) for fi, f in enumerate(frames) for ii in range(len(getattr(f, attr)))]

    def n_drop(pop):
        return int(math.floor(spec.drop_rate * len(pop) + 0.5))

    lane_pop, area_pop, te_pop = population("lane_segments"), population("areas"), population("traffic_elements")
    drop_l = _pick(rng, lane_pop, n_drop(lane_pop))
    drop_a = _pick(rng, area_pop, n_drop(area_pop))
    drop_t = _pick(rng, te_pop, n_drop(te_pop))

    # Candidate edges for zeroing: both endpoints survive.
    ll_edges = [(fi, i, j) for fi, f in enumerate(frames) for i, j in zip(*np.nonzero(f.topology.ll_scores))
                if (fi, i) not in drop_l and (fi, j) not in drop_l]
    lt_edges = [(fi, i, j) for fi, f in enumerate(frames) for i, j in zip(*np.nonzero(f.topology.lt_scores))
                if (fi, i) not in drop_l and (fi, j) not in drop_t]
    zero_ll = _pick(rng, [(int(a), int(b), int(c)) for a, b, c in ll_edges], spec.zeroed_ll_edges)
    zero_lt = _pick(rng, [(int(a), int(b), int(c)) for a, b, c in lt_edges], spec.zeroed_lt_edges)

    offset = None if spec.rigid_offset is None else np.asarray(spec.rigid_offset, dtype=np.float64).reshape(3)
    sigma = spec.point_jitter_sigma

    def conf():
        return float(1.0 - 0.9 * spec.confidence_noise * rng.uniform())

    def jitter(lines):
        if sigma == 0:
            return lines
        if spec.jitter_mode == "rigid":
            d = rng.normal(0.0, sigma, size=3)
            return [ln + d for ln in lines]
        return [ln + rng.normal(0.0, sigma, size=ln.shape) for ln in lines]

    out_frames = []
    for fi, f in enumerate(frames):
        keep_l = [i for i in range(len(f.lane_segments)) if (fi, i) not in drop_l]
        keep_a = [i for i in range(len(f.areas)) if (fi, i) not in drop_a]
        keep_t = [i for i in range(len(f.traffic_elements)) if (fi, i) not in drop_t]
        lanes = []
        for i in keep_l:
            g = f.lane_segments[i]
            c, lb, rb = jitter([g.centerline, g.left_boundary, g.right_boundary])
            if offset is not None:
                c = c + offset
                if spec.offset_boundaries:
                    lb, rb = lb + offset, rb + offset
            lanes.append(LaneSegment(g.id, c, lb, rb, g.class_id, g.left_type, g.right_type, conf()))
        areas = []
        for i in keep_a:
            g = f.areas[i]
            (curve,) = jitter([g.curve])
            areas.append(AreaInstance(g.id, curve, g.class_id, conf()))
        tes = [TrafficElement(f.traffic_elements[i].id, f.traffic_elements[i].box,
                              f.traffic_elements[i].class_id, conf()) for i in keep_t]

        ll = f.topology.ll_scores[np.ix_(keep_l, keep_l)].copy()
        lt = f.topology.lt_scores[np.ix_(keep_l, keep_t)].copy()
        pos_l = {g: p for p, g in enumerate(keep_l)}
        pos_t = {g: p for p, g in enumerate(keep_t)}
        for zf, i, j in zero_ll:
            if zf == fi:
                ll[pos_l[i], pos_l[j]] = 0.0
        for zf, i, j in zero_lt:
            if zf == fi:
                lt[pos_l[i], pos_t[j]] = 0.0
        if spec.topology_flip_rate > 0:
            for mat in (ll, lt):
                flip = rng.uniform(size=mat.shape) < spec.topology_flip_rate
                mat[flip] = 1.0 - mat[flip]
            np.fill_diagonal(ll, 0.0)

        n_fp = spec.false_positive_count
        lanes += [_fp_lane(rng, k, f"fp-lane{k}") for k in range(n_fp)]
        areas += [_fp_area(rng, k, f"fp-area{k}") for k in range(n_fp)]
        tes += [_fp_te(rng, k, f"fp-te{k}") for k in range(n_fp)]
        ll = np.pad(ll, ((0, n_fp), (0, n_fp)))
        lt = np.pad(lt, ((0, n_fp), (0, n_fp)))
        out_frames.append(FramePrediction(f.frame_id, lanes, areas, tes, TopologyPrediction(ll, lt)))

    pred = SceneArchive(archive.scene_id, out_frames, {}, "predictions")
    return pred, _expected(frames, spec, cfg, drop_l, drop_a, drop_t, zero_ll, zero_lt, offset)


def _vacuous(any_preds: bool) -> float:
    return 0.0 if any_preds else 1.0


def _expected(frames, spec, cfg, drop_l, drop_a, drop_t, zero_ll, zero_lt, offset) -> ExpectedOutcome:
    exp = ExpectedOutcome(dropped={"lanes": len(drop_l), "areas": len(drop_a), "traffic": len(drop_t)})
    n_fp = spec.false_positive_count
    flips = spec.topology_flip_rate > 0
    d = 0.0 if offset is None else float(np.linalg.norm(offset))
    lanes_exact = spec.point_jitter_sigma == 0 and d < HALF_WIDTH and d not in cfg.frechet_thresholds
    lanes_exact = lanes_exact and d != cfg.topology_frechet_threshold

    lane_recall = _class_recall([f.lane_segments for f in frames], drop_l)
    if lanes_exact:
        if lane_recall is None:
            exp.frechet_family = exp.chamfer_family = _vacuous(n_fp > 0)
        else:
            passed = np.mean([d <= t for t in cfg.frechet_thresholds])
            exp.frechet_family = lane_recall * float(passed)
            if not (spec.offset_boundaries and d > 0):
                exp.chamfer_family = lane_recall
        if exp.chamfer_family is not None and cfg.det_l_combination == "mean":
            exp.det_l = (exp.frechet_family + exp.chamfer_family) / 2

    if spec.point_jitter_sigma == 0:
        r = _class_recall([f.areas for f in frames], drop_a)
        exp.det_a = _vacuous(n_fp > 0) if r is None else r
    r = _class_recall([f.traffic_elements for f in frames], drop_t)
    exp.det_t = _vacuous(n_fp > 0) if r is None else r

    if lanes_exact and not flips:
        lanes_match = d <= cfg.topology_frechet_threshold
        exp.top_ll = _top(frames, "ll_scores", drop_l, drop_l, zero_ll, lanes_match, True)
        exp.top_lt = _top(frames, "lt_scores", drop_l, drop_t, zero_lt, lanes_match, False)

    parts = (exp.det_l, exp.det_a, exp.det_t, exp.top_ll, exp.top_lt)
    if all(v is not None for v in parts):
        exp.olus = olus(*parts)
    return exp


def _top(frames, attr, drop_rows, drop_cols, zeroed, rows_match, square):
    aps, positives = [], 0
    for fi, f in enumerate(frames):
        mat = getattr(f.topology, attr)
        for i in range(mat.shape[0]):
            cols = [j for j in np.flatnonzero(mat[i]) if not (square and j == i)]
            if not cols:
                continue
            row_ok = rows_match and (fi, i) not in drop_rows
            kept = [j for j in cols if row_ok and (fi, int(j)) not in drop_cols and (fi, i, int(j)) not in zeroed]
            aps.append(len(kept) / len(cols))
            positives += len(kept)
    if not aps:
        return 1.0 if positives == 0 else 0.0
    return float(np.mean(aps))
