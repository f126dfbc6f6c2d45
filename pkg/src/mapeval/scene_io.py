"""JSON ingestion of scenes / predictions and serialization of metric reports.

Scene and prediction documents share one layout::

    {
      "schema_version": "1.0",
      "kind": "scene" | "predictions",
      "scene_id": "...",
      "frames": [
        {
          "frame_id": "...",
          "lane_segments": [{"id", "centerline": [[x, y, z], ...], "left_boundary",
                             "right_boundary", "class_id", "left_type", "right_type",
                             "confidence", "type_probs"?}],
          "areas": [{"id", "curve": [[x, y, z], ...], "class_id", "confidence"}],
          "traffic_elements": [{"id", "box": [x1, y1, x2, y2], "class_id", "confidence"}],
          "topology": {"lane_lane": [[from_id, to_id, score?], ...],
                       "lane_traffic": [[lane_id, te_id, score?], ...]},
          "sd_map": {"polylines": [{"points": [[x, y, z], ...], "road_type": 0}]}
        }
      ]
    }

Topology edges are sparse and keyed by instance ids; a missing score means
1.0. Coordinates are written with ``repr`` precision so archives round-trip
exactly; reports round floats to 9 significant digits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    AreaInstance,
    BevGridSpec,
    FrameGroundTruth,
    FramePrediction,
    LaneSegment,
    MetricsReport,
    TopologyPrediction,
    TrafficElement,
    Violation,
    validate_frame,
)
from .raster import SdMap

SCHEMA_VERSION = "1.0"


class SceneFormatError(ValueError):
    """Malformed document; the message carries the location of the problem."""


class UnsupportedVersionError(SceneFormatError):
    pass


class SceneValidationError(ValueError):
    def __init__(self, violations: list, source: str = ""):
        self.violations = violations
        head = f"{source}: " if source else ""
        lines = "\n".join(f"  {v}" for v in violations)
        super().__init__(f"{head}{len(violations)} invariant violation(s)\n{lines}")


@dataclass(eq=False)
class SceneArchive:
    scene_id: str
    frames: list
    sd_maps: dict = field(default_factory=dict)  # frame_id -> SdMap
    kind: str = "scene"

    def __eq__(self, other):
        return (
            isinstance(other, SceneArchive)
            and (self.scene_id, self.kind) == (other.scene_id, other.kind)
            and len(self.frames) == len(other.frames)
            and all(a == b for a, b in zip(self.frames, other.frames))
            and self.sd_maps.keys() == other.sd_maps.keys()
            and all(self.sd_maps[k] == other.sd_maps[k] for k in self.sd_maps)
        )

    def validate(self, spec: Optional[BevGridSpec] = None) -> list:
        out = []
        ids = [f.frame_id for f in self.frames]
        if len(set(ids)) != len(ids):
            out.append(Violation("scene", self.scene_id, "frames", "duplicate frame ids"))
        if ids != sorted(ids):
            out.append(Violation("scene", self.scene_id, "frames", "frame ids are not sorted"))
        for f in self.frames:
            for v in validate_frame(f, spec):
                out.append(Violation(v.kind, f"{f.frame_id}/{v.instance}" if v.instance else f.frame_id, v.field, v.message))
        return out


# ---------------------------------------------------------------------------
# decoding


class _Path:
    def __init__(self, parts=()):
        self.parts = parts

    def __truediv__(self, key):
        return _Path(self.parts + (key,))

    def __str__(self):
        s = ""
        for p in self.parts:
            s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else p)
        return s or "<root>"


def _get(obj, key, where, default=...):
    if not isinstance(obj, dict):
        raise SceneFormatError(f"{where}: expected an object")
    if key not in obj:
        if default is ...:
            raise SceneFormatError(f"{where / key}: missing field")
        return default
    return obj[key]


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SceneFormatError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _int(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise SceneFormatError(f"{where}: expected an integer, got {v!r}")
    return v


def _points(v, where):
    if not isinstance(v, list):
        raise SceneFormatError(f"{where}: expected a list of [x, y, z] points")
    out = []
    for i, p in enumerate(v):
        if not isinstance(p, list) or len(p) != 3:
            raise SceneFormatError(f"{where / i}: expected [x, y, z]")
        out.append([_num(c, where / i) for c in p])
    return np.array(out, dtype=np.float64).reshape(-1, 3)


def _lane(d, where):
    tp = _get(d, "type_probs", where, None)
    return LaneSegment(
        id=str(_get(d, "id", where)),
        centerline=_points(_get(d, "centerline", where), where / "centerline"),
        left_boundary=_points(_get(d, "left_boundary", where), where / "left_boundary"),
        right_boundary=_points(_get(d, "right_boundary", where), where / "right_boundary"),
        class_id=_int(_get(d, "class_id", where, 0), where / "class_id"),
        left_type=_int(_get(d, "left_type", where, 0), where / "left_type"),
        right_type=_int(_get(d, "right_type", where, 0), where / "right_type"),
        confidence=_num(_get(d, "confidence", where, 1.0), where / "confidence"),
        type_probs=None if tp is None else np.array([[_num(x, where / "type_probs") for x in row] for row in tp]),
    )


def _area(d, where):
    return AreaInstance(
        id=str(_get(d, "id", where)),
        curve=_points(_get(d, "curve", where), where / "curve"),
        class_id=_int(_get(d, "class_id", where, 0), where / "class_id"),
        confidence=_num(_get(d, "confidence", where, 1.0), where / "confidence"),
    )


def _te(d, where):
    box = _get(d, "box", where)
    if not isinstance(box, list) or len(box) != 4:
        raise SceneFormatError(f"{where / 'box'}: expected [x1, y1, x2, y2]")
    return TrafficElement(
        id=str(_get(d, "id", where)),
        box=np.array([_num(v, where / "box") for v in box]),
        class_id=_int(_get(d, "class_id", where, 0), where / "class_id"),
        confidence=_num(_get(d, "confidence", where, 1.0), where / "confidence"),
    )


def _edges(edges, rows, cols, shape, where):
    mat = np.zeros(shape)
    if not isinstance(edges, list):
        raise SceneFormatError(f"{where}: expected a list of edges")
    for k, e in enumerate(edges):
        if not isinstance(e, list) or len(e) not in (2, 3):
            raise SceneFormatError(f"{where / k}: expected [from_id, to_id] or [from_id, to_id, score]")
        a, b = str(e[0]), str(e[1])
        if a not in rows or b not in cols:
            raise SceneFormatError(f"{where / k}: edge references unknown instance id")
        mat[rows[a], cols[b]] = _num(e[2], where / k) if len(e) == 3 else 1.0
    return mat


def _frame(d, where, cls):
    lanes = [_lane(x, where / "lane_segments" / i) for i, x in enumerate(_get(d, "lane_segments", where, []))]
    areas = [_area(x, where / "areas" / i) for i, x in enumerate(_get(d, "areas", where, []))]
    tes = [_te(x, where / "traffic_elements" / i) for i, x in enumerate(_get(d, "traffic_elements", where, []))]
    topo = _get(d, "topology", where, {}) or {}
    # Duplicate ids resolve to their first occurrence; validation reports them.
    lane_idx, te_idx = {}, {}
    for i, ls in enumerate(lanes):
        lane_idx.setdefault(ls.id, i)
    for i, t in enumerate(tes):
        te_idx.setdefault(t.id, i)
    n_l, n_t = len(lanes), len(tes)
    ll = _edges(topo.get("lane_lane", []), lane_idx, lane_idx, (n_l, n_l), where / "topology" / "lane_lane")
    lt = _edges(topo.get("lane_traffic", []), lane_idx, te_idx, (n_l, n_t), where / "topology" / "lane_traffic")
    frame = cls(str(_get(d, "frame_id", where)), lanes, areas, tes, TopologyPrediction(ll, lt))
    sd = _get(d, "sd_map", where, None)
    sdmap = None
    if sd is not None:
        polys = []
        for i, p in enumerate(_get(sd, "polylines", where / "sd_map")):
            w = where / "sd_map" / "polylines" / i
            polys.append((_points(_get(p, "points", w), w / "points"), _int(_get(p, "road_type", w, 0), w)))
        try:
            sdmap = SdMap(tuple(polys))
        except ValueError as exc:
            raise SceneFormatError(f"{where / 'sd_map'}: {exc}") from None
    return frame, sdmap


def parse_archive(doc, kind: str, source: str = "<memory>") -> SceneArchive:
    root = _Path((source,))
    version = _get(doc, "schema_version", root)
    if version != SCHEMA_VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION!r})")
    doc_kind = _get(doc, "kind", root, kind)
    if doc_kind != kind:
        raise SceneFormatError(f"{source}: expected a {kind!r} document, got {doc_kind!r}")
    cls = FrameGroundTruth if kind == "scene" else FramePrediction
    frames, sd_maps = [], {}
    for i, fd in enumerate(_get(doc, "frames", root)):
        try:
            frame, sdmap = _frame(fd, root / "frames" / i, cls)
        except ValueError as exc:
            if isinstance(exc, SceneFormatError):
                raise
            raise SceneFormatError(f"{root / 'frames' / i}: {exc}") from None
        frames.append(frame)
        if sdmap is not None:
            sd_maps[frame.frame_id] = sdmap
    return SceneArchive(str(_get(doc, "scene_id", root)), frames, sd_maps, kind)


def _read(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def _load(path, kind, spec, validate):
    archive = parse_archive(_read(path), kind, str(path))
    if validate:
        violations = archive.validate(spec)
        if violations:
            raise SceneValidationError(violations, str(path))
    return archive


def load_ground_truth(path, spec: Optional[BevGridSpec] = None, validate: bool = True) -> SceneArchive:
    return _load(path, "scene", spec, validate)


def load_predictions(path, spec: Optional[BevGridSpec] = None, validate: bool = True) -> SceneArchive:
    return _load(path, "predictions", spec, validate)


def scene_files(path) -> list:
    """A single JSON file, or every ``*.json`` in a directory sorted by name."""
    p = Path(path)
    if p.is_dir():
        return sorted(p.glob("*.json"))
    return [p]


# ---------------------------------------------------------------------------
# encoding


def _pts_out(a):
    return [[float(v) for v in p] for p in np.asarray(a)]


def _edges_out(mat, rows, cols, binary):
    out = []
    for i, j in zip(*np.nonzero(mat)):
        e = [rows[i], cols[j]]
        if not binary:
            e.append(float(mat[i, j]))
        out.append(e)
    return out


def archive_to_dict(archive: SceneArchive) -> dict:
    binary = archive.kind == "scene"
    frames = []
    for f in archive.frames:
        lane_ids = [ls.id for ls in f.lane_segments]
        te_ids = [t.id for t in f.traffic_elements]
        lanes = []
        for ls in f.lane_segments:
            d = {"id": ls.id, "centerline": _pts_out(ls.centerline), "left_boundary": _pts_out(ls.left_boundary),
                 "right_boundary": _pts_out(ls.right_boundary), "class_id": ls.class_id,
                 "left_type": ls.left_type, "right_type": ls.right_type, "confidence": ls.confidence}
            if ls.type_probs is not None:
                d["type_probs"] = ls.type_probs.tolist()
            lanes.append(d)
        fd = {
            "frame_id": f.frame_id,
            "lane_segments": lanes,
            "areas": [{"id": a.id, "curve": _pts_out(a.curve), "class_id": a.class_id, "confidence": a.confidence}
                      for a in f.areas],
            "traffic_elements": [{"id": t.id, "box": [float(v) for v in t.box], "class_id": t.class_id,
                                  "confidence": t.confidence} for t in f.traffic_elements],
            "topology": {
                "lane_lane": _edges_out(f.topology.ll_scores, lane_ids, lane_ids, binary),
                "lane_traffic": _edges_out(f.topology.lt_scores, lane_ids, te_ids, binary),
            },
        }
        if f.frame_id in archive.sd_maps:
            fd["sd_map"] = {"polylines": [{"points": _pts_out(p), "road_type": t}
                                          for p, t in archive.sd_maps[f.frame_id].polylines]}
        frames.append(fd)
    return {"schema_version": SCHEMA_VERSION, "kind": archive.kind, "scene_id": archive.scene_id, "frames": frames}


def write_archive(archive: SceneArchive, path) -> None:
    Path(path).write_text(json.dumps(archive_to_dict(archive), indent=None, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def _round9(obj):
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {str(k): _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    return obj


def report_to_dict(report: MetricsReport) -> dict:
    return _round9({
        "schema_version": SCHEMA_VERSION,
        "kind": "report",
        "metrics": {"det_l": report.det_l, "det_a": report.det_a, "det_t": report.det_t,
                    "top_ll": report.top_ll, "top_lt": report.top_lt, "olus": report.olus},
        "per_class": report.per_class,
        "per_threshold": report.per_threshold,
        "config": report.config,
    })


def report_json(report: MetricsReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"


def report_table(report: MetricsReport, breakdown: bool = True) -> str:
    rows = [("DET_l", report.det_l), ("DET_a", report.det_a), ("DET_t", report.det_t),
            ("TOP_ll", report.top_ll), ("TOP_lt", report.top_lt), ("OLUS", report.olus)]
    lines = [f"{'metric':<8} {'value':>8}", "-" * 17]
    lines += [f"{name:<8} {100 * v:>7.2f}%" for name, v in rows]
    if breakdown and report.per_threshold:
        lines += ["", f"{'breakdown':<28} {'AP':>8}", "-" * 37]
        lines += [f"{k:<28} {100 * v:>7.2f}%" for k, v in sorted(report.per_threshold.items())]
    return "\n".join(lines) + "\n"


def write_report(report: MetricsReport, path, format: str = "json") -> None:
    if format == "json":
        text = report_json(report)
    elif format == "table":
        text = report_table(report)
    else:
        raise ValueError(f"unknown report format {format!r}")
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def read_report(path) -> dict:
    doc = _read(path)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    return doc
