"""Domain types shared by metrics, losses, rasterization and IO.

All instance types are frozen dataclasses holding read-only numpy arrays.
Construction only normalises array shapes; value-level invariants (point
counts, score ranges, box ordering, ...) are audited by :func:`validate_frame`
so that loaders can report every problem at once instead of failing on the
first one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Optional, Sequence

import numpy as np

# Sample points per lane line.
NUM_POINTS = 11

# Line types for lane boundaries.
LINE_TYPE_NONE = 0
LINE_TYPE_SOLID = 1
LINE_TYPE_DASHED = 2
NUM_LINE_TYPES = 3

# Area vocabulary.
PEDESTRIAN_CROSSING = 0
ROAD_BOUNDARY = 1
AREA_CLASSES = {PEDESTRIAN_CROSSING: "pedestrian_crossing", ROAD_BOUNDARY: "road_boundary"}

NUM_TRAFFIC_CLASSES = 13

# Annotation range in the ego frame, meters.
X_RANGE = (-50.0, 50.0)
Y_RANGE = (-25.0, 25.0)

# Front-view image size (width, height) in pixels.
FRONT_IMAGE_SIZE = (1550, 2048)


def as_points(points: Any, name: str = "points") -> np.ndarray:
    """Coerce ``points`` to a read-only ``(n, 3)`` float64 array."""
    arr = np.array(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    arr.setflags(write=False)
    return arr


def _readonly(a: Any, dtype=np.float64, ndim: Optional[int] = None) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        if arr.size == 0:
            arr = arr.reshape((0,) * ndim)
        else:
            raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _values_equal(a: Any, b: Any) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        if a is None or b is None:
            return False
        return np.shape(a) == np.shape(b) and bool(np.array_equal(a, b))
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_values_equal(x, y) for x, y in zip(a, b))
    return a == b


class _ValueEq:
    """Field-wise equality that understands numpy arrays."""

    def __eq__(self, other: object) -> bool:
        if type(self) is not type(other):
            return NotImplemented
        return all(_values_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class LaneSegment(_ValueEq):
    """A lane instance: centerline plus left/right boundaries.

    ``left_boundary`` is offset towards +y (the vehicle's left) when driving
    along the centerline. ``type_probs`` is optional and only used by the
    line-type loss; it holds one probability row per boundary ``(2, n_types)``.
    """

    id: str
    centerline: np.ndarray
    left_boundary: np.ndarray
    right_boundary: np.ndarray
    class_id: int = 0
    left_type: int = LINE_TYPE_NONE
    right_type: int = LINE_TYPE_NONE
    confidence: float = 1.0
    type_probs: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        for name in ("centerline", "left_boundary", "right_boundary"):
            object.__setattr__(self, name, as_points(getattr(self, name), name))
        if self.type_probs is not None:
            object.__setattr__(self, "type_probs", _readonly(self.type_probs, ndim=2))
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "left_type", int(self.left_type))
        object.__setattr__(self, "right_type", int(self.right_type))
        object.__setattr__(self, "confidence", float(self.confidence))

    def lines(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.centerline, self.left_boundary, self.right_boundary


@dataclass(frozen=True, eq=False)
class AreaInstance(_ValueEq):
    """Undirected BEV curve: a pedestrian crossing or a road boundary."""

    id: str
    curve: np.ndarray
    class_id: int = PEDESTRIAN_CROSSING
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "curve", as_points(self.curve, "curve"))
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "confidence", float(self.confidence))


@dataclass(frozen=True, eq=False)
class TrafficElement(_ValueEq):
    """Front-view axis-aligned box ``(x1, y1, x2, y2)`` in pixels."""

    id: str
    box: np.ndarray
    class_id: int = 0
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        box = _readonly(self.box)
        if box.shape != (4,):
            raise ValueError(f"box must have 4 coordinates, got shape {box.shape}")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "confidence", float(self.confidence))


@dataclass(frozen=True, eq=False)
class TopologyPrediction(_ValueEq):
    """Lane-lane ``[L, L]`` and lane-traffic ``[L, T]`` score matrices.

    Rows and columns follow the instance order of the owning frame. Ground
    truth uses the same type with entries restricted to 0/1.
    """

    ll_scores: np.ndarray
    lt_scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ll_scores", _readonly(self.ll_scores, ndim=2))
        object.__setattr__(self, "lt_scores", _readonly(self.lt_scores, ndim=2))

    @classmethod
    def empty(cls, num_lanes: int = 0, num_traffic: int = 0) -> "TopologyPrediction":
        return cls(np.zeros((num_lanes, num_lanes)), np.zeros((num_lanes, num_traffic)))


@dataclass(frozen=True, eq=False)
class Frame(_ValueEq):
    frame_id: str
    lane_segments: tuple = ()
    areas: tuple = ()
    traffic_elements: tuple = ()
    topology: Optional[TopologyPrediction] = None

    is_ground_truth = False

    def __post_init__(self):
        object.__setattr__(self, "frame_id", str(self.frame_id))
        object.__setattr__(self, "lane_segments", tuple(self.lane_segments))
        object.__setattr__(self, "areas", tuple(self.areas))
        object.__setattr__(self, "traffic_elements", tuple(self.traffic_elements))
        if self.topology is None:
            object.__setattr__(
                self,
                "topology",
                TopologyPrediction.empty(len(self.lane_segments), len(self.traffic_elements)),
            )


@dataclass(frozen=True, eq=False)
class FrameGroundTruth(Frame):
    is_ground_truth = True


@dataclass(frozen=True, eq=False)
class FramePrediction(Frame):
    is_ground_truth = False


@dataclass(frozen=True)
class BevGridSpec:
    """BEV raster layout. Rows run along x (forward), columns along y (left)."""

    x_range: tuple[float, float] = X_RANGE
    y_range: tuple[float, float] = Y_RANGE
    rows: int = 200
    cols: int = 100

    def __post_init__(self):
        object.__setattr__(self, "x_range", (float(self.x_range[0]), float(self.x_range[1])))
        object.__setattr__(self, "y_range", (float(self.y_range[0]), float(self.y_range[1])))
        if not (self.x_range[1] > self.x_range[0] and self.y_range[1] > self.y_range[0]):
            raise ValueError("grid ranges must satisfy max > min")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")

    @property
    def cell_x(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.rows

    @property
    def cell_y(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def scaled(self, factor: int) -> "BevGridSpec":
        return BevGridSpec(self.x_range, self.y_range, self.rows * factor, self.cols * factor)


@dataclass(frozen=True)
class LaneSegmentWeights:
    cls: float = 1.5
    reg: float = 0.0025
    type: float = 0.1
    mask: float = 3.0
    dice: float = 3.0


@dataclass(frozen=True)
class AreaWeights:
    cls: float = 1.5
    reg: float = 0.0025
    dir: float = 0.005
    seg: float = 10.0


@dataclass(frozen=True)
class TrafficWeights:
    cls: float = 1.0
    reg: float = 2.5
    iou: float = 1.0


@dataclass(frozen=True)
class LossWeights:
    lanesegment: LaneSegmentWeights = field(default_factory=LaneSegmentWeights)
    area: AreaWeights = field(default_factory=AreaWeights)
    traffic: TrafficWeights = field(default_factory=TrafficWeights)
    topology_ll: float = 5.0
    topology_lt: float = 5.0

    def __post_init__(self):
        values = [self.topology_ll, self.topology_lt]
        for group in (self.lanesegment, self.area, self.traffic):
            values.extend(getattr(group, f.name) for f in fields(group))
        if any(v < 0 for v in values):
            raise ValueError("loss weights must be non-negative")


def olus(det_l: float, det_a: float, det_t: float, top_ll: float, top_lt: float) -> float:
    """Combine the five sub-metrics; topology scores enter through a square root.

    >>> round(olus(0.4295, 0.3472, 0.8215, 0.3648, 0.4191), 5)
    0.56992
    """
    values = {"det_l": det_l, "det_a": det_a, "det_t": det_t, "top_ll": top_ll, "top_lt": top_lt}
    for name, v in values.items():
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name}={v} is outside [0, 1]")
    return (det_l + det_a + det_t + math.sqrt(top_ll) + math.sqrt(top_lt)) / 5.0


@dataclass
class MetricsReport:
    det_l: float
    det_a: float
    det_t: float
    top_ll: float
    top_lt: float
    olus: float
    per_class: dict = field(default_factory=dict)
    per_threshold: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @classmethod
    def from_components(cls, det_l, det_a, det_t, top_ll, top_lt, **extra) -> "MetricsReport":
        return cls(det_l, det_a, det_t, top_ll, top_lt, olus(det_l, det_a, det_t, top_ll, top_lt), **extra)

    def components(self) -> tuple[float, float, float, float, float]:
        return (self.det_l, self.det_a, self.det_t, self.top_ll, self.top_lt)

    def is_consistent(self, tol: float = 1e-12) -> bool:
        aps = list(self.per_class.values()) + list(self.per_threshold.values())
        return abs(olus(*self.components()) - self.olus) <= tol and all(0.0 <= v <= 1.0 for v in aps)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str
    instance: str
    field: str
    message: str

    def __str__(self) -> str:
        where = f"{self.kind}[{self.instance}]" if self.instance else self.kind
        return f"{where}.{self.field}: {self.message}"


def _check_points(kind, inst, name, pts, spec, margin, expected_len, out):
    if expected_len is not None and len(pts) != expected_len:
        out.append(Violation(kind, inst, name, f"expected {expected_len} points, got {len(pts)}"))
    elif len(pts) < 2:
        out.append(Violation(kind, inst, name, f"needs at least 2 points, got {len(pts)}"))
    if len(pts) == 0:
        return
    if not np.all(np.isfinite(pts)):
        out.append(Violation(kind, inst, name, "non-finite coordinate"))
        return
    if len(pts) >= 2 and np.all(pts == pts[0]):
        out.append(Violation(kind, inst, name, "all points coincide"))
    if spec is not None:
        x_lo, x_hi = spec.x_range[0] - margin, spec.x_range[1] + margin
        y_lo, y_hi = spec.y_range[0] - margin, spec.y_range[1] + margin
        outside = (pts[:, 0] < x_lo) | (pts[:, 0] > x_hi) | (pts[:, 1] < y_lo) | (pts[:, 1] > y_hi)
        if outside.any():
            out.append(Violation(kind, inst, name, f"{int(outside.sum())} point(s) beyond BEV range + {margin} m"))


def _check_confidence(kind, inst, conf, is_gt, out):
    if not (0.0 <= conf <= 1.0):
        out.append(Violation(kind, inst, "confidence", f"{conf} outside [0, 1]"))
    elif is_gt and conf != 1.0:
        out.append(Violation(kind, inst, "confidence", "ground truth confidence must be 1.0"))


def _check_unique(kind, items, out):
    seen = set()
    for it in items:
        if it.id in seen:
            out.append(Violation(kind, it.id, "id", "duplicate instance id"))
        seen.add(it.id)


def validate_frame(
    frame: Frame,
    spec: Optional[BevGridSpec] = None,
    *,
    margin: float = 10.0,
    num_points: int = NUM_POINTS,
    num_line_types: int = NUM_LINE_TYPES,
    num_traffic_classes: int = NUM_TRAFFIC_CLASSES,
) -> list[Violation]:
    """Audit every invariant of ``frame``; returns an empty list when it is clean.

    Points are checked against ``spec`` widened by ``margin`` meters. Ground
    truth frames must additionally carry unit confidences and a binary topology.
    """
    spec = spec if spec is not None else BevGridSpec()
    is_gt = isinstance(frame, FrameGroundTruth)
    out: list[Violation] = []

    for ls in frame.lane_segments:
        for name, pts in zip(("centerline", "left_boundary", "right_boundary"), ls.lines()):
            _check_points("lane", ls.id, name, pts, spec, margin, num_points, out)
        for name in ("left_type", "right_type"):
            v = getattr(ls, name)
            if not (0 <= v < num_line_types):
                out.append(Violation("lane", ls.id, name, f"line type {v} outside [0, {num_line_types})"))
        if ls.class_id < 0:
            out.append(Violation("lane", ls.id, "class_id", "negative class id"))
        if ls.type_probs is not None and ls.type_probs.shape != (2, num_line_types):
            out.append(Violation("lane", ls.id, "type_probs", f"expected shape (2, {num_line_types})"))
        _check_confidence("lane", ls.id, ls.confidence, is_gt, out)

    for a in frame.areas:
        _check_points("area", a.id, "curve", a.curve, spec, margin, None, out)
        if a.class_id not in AREA_CLASSES:
            out.append(Violation("area", a.id, "class_id", f"unknown area class {a.class_id}"))
        _check_confidence("area", a.id, a.confidence, is_gt, out)

    for te in frame.traffic_elements:
        x1, y1, x2, y2 = te.box
        if not np.all(np.isfinite(te.box)):
            out.append(Violation("traffic", te.id, "box", "non-finite coordinate"))
        else:
            if not (x1 < x2 and y1 < y2):
                out.append(Violation("traffic", te.id, "box", "degenerate box"))
            if min(x1, y1) < 0:
                out.append(Violation("traffic", te.id, "box", "negative pixel coordinate"))
        if not (0 <= te.class_id < num_traffic_classes):
            out.append(Violation("traffic", te.id, "class_id", f"class {te.class_id} outside [0, {num_traffic_classes})"))
        _check_confidence("traffic", te.id, te.confidence, is_gt, out)

    _check_unique("lane", frame.lane_segments, out)
    _check_unique("area", frame.areas, out)
    _check_unique("traffic", frame.traffic_elements, out)

    n_l, n_t = len(frame.lane_segments), len(frame.traffic_elements)
    topo = frame.topology
    for name, mat, shape in (("ll_scores", topo.ll_scores, (n_l, n_l)), ("lt_scores", topo.lt_scores, (n_l, n_t))):
        if mat.shape != shape:
            out.append(Violation("topology", "", name, f"shape {mat.shape} does not match instances {shape}"))
            continue
        if mat.size == 0:
            continue
        if not np.all(np.isfinite(mat)) or mat.min() < 0 or mat.max() > 1:
            out.append(Violation("topology", "", name, "scores outside [0, 1]"))
        elif is_gt and not np.all((mat == 0) | (mat == 1)):
            out.append(Violation("topology", "", name, "ground truth topology must be binary"))
    return out


def iter_instances(frame: Frame) -> Iterable[tuple[str, Any]]:
    for ls in frame.lane_segments:
        yield "lane", ls
    for a in frame.areas:
        yield "area", a
    for te in frame.traffic_elements:
        yield "traffic", te


def class_ids(instances: Sequence) -> np.ndarray:
    return np.array([it.class_id for it in instances], dtype=np.int64)
