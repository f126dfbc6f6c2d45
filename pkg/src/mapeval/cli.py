"""Command-line entry point.

Exit codes: 0 success, 2 invalid input (parse, schema, invariant or
alignment failure), 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import scene_io
from .core import BevGridSpec
from .losses import assign_frame, composite_losses
from .metrics import FrameAlignmentError, MetricConfig, evaluate
from .raster import area_boundary_mask, lane_segment_mask, rasterize_sdmap, union_masks, write_csv, write_pgm
from .synthetic import PerturbationSpec, generate_scene, perturb

log = logging.getLogger("mapeval")

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2


class InputError(Exception):
    """User-facing input problem; maps to exit code 2."""


def _floats(text):
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from None


# Flag name -> (default, converter). Config files use the same keys.
SETTINGS = {
    "thresholds-frechet": ("1,2,3", _floats),
    "thresholds-chamfer": ("0.5,1,1.5", _floats),
    "thresholds-iou": ("0.75", _floats),
    "bev-rows": (200, int),
    "bev-cols": (100, int),
    "workers": (1, int),
    "format": ("json", str),
}


def _setting(args, config, name):
    default, conv = SETTINGS[name]
    value = getattr(args, name.replace("-", "_"), None)
    if value is None:
        value = config.get(name, default)
    try:
        return conv(value)
    except (TypeError, ValueError):
        raise InputError(f"invalid value for {name}: {value!r}") from None


def _load_config(path):
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict) or any(isinstance(v, (dict, list)) for v in doc.values()):
        raise InputError(f"config {path} must be a flat key/value object")
    unknown = set(doc) - set(SETTINGS)
    if unknown:
        raise InputError(f"config {path}: unknown keys {sorted(unknown)}")
    return doc


def _metric_config(args, config) -> MetricConfig:
    try:
        return MetricConfig(
            frechet_thresholds=_setting(args, config, "thresholds-frechet"),
            chamfer_thresholds=_setting(args, config, "thresholds-chamfer"),
            iou_thresholds=_setting(args, config, "thresholds-iou"),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _grid(args, config) -> BevGridSpec:
    try:
        return BevGridSpec(rows=_setting(args, config, "bev-rows"), cols=_setting(args, config, "bev-cols"))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _archives(path, loader, spec):
    files = scene_io.scene_files(path)
    if not files or not all(f.exists() for f in files):
        raise InputError(f"no scene files at {path}")
    return [loader(f, spec) for f in files]


def _aligned_frames(gt_archives, pred_archives):
    preds = {a.scene_id: a for a in pred_archives}
    gts, ps = [], []
    for g in gt_archives:
        p = preds.pop(g.scene_id, None)
        if p is None:
            raise FrameAlignmentError(f"scene {g.scene_id!r} has no predictions")
        if [f.frame_id for f in g.frames] != [f.frame_id for f in p.frames]:
            for i, (a, b) in enumerate(zip(g.frames, p.frames)):
                if a.frame_id != b.frame_id:
                    raise FrameAlignmentError(
                        f"scene {g.scene_id!r} frame {i}: ground truth {a.frame_id!r} vs prediction {b.frame_id!r}")
            raise FrameAlignmentError(
                f"scene {g.scene_id!r}: {len(g.frames)} ground-truth frames vs {len(p.frames)} prediction frames")
        gts.extend(g.frames)
        ps.extend(p.frames)
    if preds:
        raise FrameAlignmentError(f"predictions for unknown scene {sorted(preds)[0]!r}")
    return ps, gts


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    cfg = _metric_config(args, config)
    spec = _grid(args, config)
    workers = _setting(args, config, "workers")
    if workers < 1:
        raise InputError("--workers must be >= 1")
    fmt = _setting(args, config, "format")
    gts = _archives(args.gt, scene_io.load_ground_truth, spec)
    preds = _archives(args.pred, scene_io.load_predictions, spec)
    pred_frames, gt_frames = _aligned_frames(gts, preds)
    log.info("evaluating %d frames with %d worker(s)", len(gt_frames), workers)
    report = evaluate(pred_frames, gt_frames, cfg, workers=workers)
    if args.out:
        scene_io.write_report(report, args.out, fmt)
    sys.stdout.write(scene_io.report_table(report, breakdown=False))
    return EXIT_OK


def _pick_frame(archive, frame_id):
    if frame_id is None:
        if not archive.frames:
            raise InputError(f"scene {archive.scene_id!r} has no frames")
        return archive.frames[0]
    for f in archive.frames:
        if f.frame_id == frame_id:
            return f
    raise InputError(f"frame {frame_id!r} not found in scene {archive.scene_id!r}")


def cmd_rasterize(args) -> int:
    config = _load_config(args.config)
    spec = _grid(args, config)
    archive = scene_io.load_ground_truth(args.gt, spec)
    frame = _pick_frame(archive, args.frame)
    if args.kind == "sdmap":
        if frame.frame_id not in archive.sd_maps:
            raise InputError(f"frame {frame.frame_id!r} carries no sd_map")
        mask = rasterize_sdmap(archive.sd_maps[frame.frame_id], spec, by_type=args.by_type)
    elif args.kind == "lanes":
        mask = union_masks([lane_segment_mask(ls, spec) for ls in frame.lane_segments], spec)
    else:
        mask = union_masks([area_boundary_mask(a, spec) for a in frame.areas], spec)
    prefix = Path(args.out)
    write_pgm(mask, prefix.with_suffix(".pgm"))
    write_csv(mask, prefix.with_suffix(".csv"))
    print(f"{args.kind}: {mask.count} cells marked on a {spec.rows}x{spec.cols} grid"
          + (" (degenerate polygon encountered)" if mask.degenerate else ""))
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    (out / "pred").mkdir(parents=True, exist_ok=True)
    try:
        pspec = PerturbationSpec(
            point_jitter_sigma=args.jitter, drop_rate=args.drop_rate, false_positive_count=args.fp,
            confidence_noise=args.conf_noise, topology_flip_rate=args.flip_rate, seed=args.seed,
            jitter_mode=args.jitter_mode,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    expected = {}
    for k in range(args.scenes):
        name = f"scene_{k:04d}"
        try:
            gt = generate_scene(args.lanes, args.areas, args.tes, args.layout, args.seed + k, args.frames, name)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        pred, exp = perturb(gt, PerturbationSpec(**{**asdict(pspec), "seed": args.seed + k}))
        scene_io.write_archive(gt, out / "gt" / f"{name}.json")
        scene_io.write_archive(pred, out / "pred" / f"{name}.json")
        expected[name] = asdict(exp)
    (out / "expected.json").write_text(json.dumps(expected, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.scenes} scene(s) to {out}")
    return EXIT_OK


def cmd_loss_check(args) -> int:
    config = _load_config(args.config)
    spec = _grid(args, config)
    gts = _archives(args.gt, scene_io.load_ground_truth, spec)
    preds = _archives(args.pred, scene_io.load_predictions, spec)
    pred_frames, gt_frames = _aligned_frames(gts, preds)
    rows: dict = {}
    for p, g in zip(pred_frames, gt_frames):
        for name, value in composite_losses(p, g, assignment=assign_frame(p, g), spec=spec).rows():
            rows.setdefault(name, []).append(value)
    lines = [f"{'term':<12} {'mean':>14}", "-" * 27]
    lines += [f"{name:<12} {float(np.mean(v)):>14.8f}" for name, v in rows.items()]
    text = "\n".join(lines) + "\n"
    if args.out:
        if _setting(args, config, "format") == "json":
            Path(args.out).write_text(json.dumps({k: float(np.mean(v)) for k, v in rows.items()},
                                                 sort_keys=True, indent=2) + "\n", encoding="utf-8")
        else:
            Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _load_config(args.config)
    spec = _grid(args, config)
    bad = 0
    targets = [(p, "scene") for p in args.gt or []] + [(p, "predictions") for p in args.pred or []]
    if not targets:
        raise InputError("nothing to validate; pass --gt and/or --pred")
    for path, kind in targets:
        for f in scene_io.scene_files(path):
            try:
                doc = scene_io._read(f)
                archive = scene_io.parse_archive(doc, kind, str(f))
            except scene_io.SceneFormatError as exc:
                print(f"{f}: {exc}")
                bad += 1
                continue
            violations = archive.validate(spec)
            for v in violations:
                print(f"{f}: {v}")
            bad += bool(violations)
            if not violations:
                print(f"{f}: ok ({len(archive.frames)} frame(s))")
    return EXIT_INVALID if bad else EXIT_OK


def _add_common(p, io=True):
    p.add_argument("--config", help="flat JSON object whose keys mirror the long flag names")
    p.add_argument("--bev-rows", type=int, help="BEV rows along x (default 200)")
    p.add_argument("--bev-cols", type=int, help="BEV columns along y (default 100)")
    if io:
        p.add_argument("--gt", required=True, help="ground-truth scene file or directory of scene files")
        p.add_argument("--pred", required=True, help="prediction file or directory of prediction files")
    p.add_argument("--out", help="output path")
    p.add_argument("--format", choices=["json", "table"], help="output format (default json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapeval", description="Lane-segment, area, traffic-element and "
                                     "topology evaluation with BEV target generation.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _add_common(p)
    p.add_argument("--thresholds-frechet", help="centerline Fréchet thresholds in meters, e.g. 1,2,3")
    p.add_argument("--thresholds-chamfer", help="Chamfer thresholds in meters, e.g. 0.5,1,1.5")
    p.add_argument("--thresholds-iou", help="traffic-element IoU thresholds, e.g. 0.75")
    p.add_argument("--workers", type=int, help="frame-parallel worker processes (default 1)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rasterize", help="write a BEV mask of one frame as PGM and CSV")
    p.add_argument("--gt", required=True, help="scene file")
    p.add_argument("--frame", help="frame id (default: first frame)")
    p.add_argument("--kind", choices=["sdmap", "lanes", "areas"], default="sdmap", help="what to rasterize")
    p.add_argument("--by-type", action="store_true", help="SD map cells hold road_type + 1 instead of 1")
    p.add_argument("--config", help="flat JSON config")
    p.add_argument("--bev-rows", type=int, help="BEV rows along x (default 200)")
    p.add_argument("--bev-cols", type=int, help="BEV columns along y (default 100)")
    p.add_argument("--out", required=True, help="output prefix; .pgm and .csv are appended")
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("synth", help="generate synthetic ground truth and perturbed predictions")
    p.add_argument("--out", required=True, help="output directory (gt/, pred/, expected.json)")
    p.add_argument("--scenes", type=int, default=1, help="number of scenes")
    p.add_argument("--frames", type=int, default=1, help="frames per scene")
    p.add_argument("--lanes", type=int, default=6, help="lanes per frame")
    p.add_argument("--areas", type=int, default=4, help="areas per frame")
    p.add_argument("--tes", type=int, default=3, help="traffic elements per frame")
    p.add_argument("--layout", choices=["straight", "arc"], default="straight", help="lane geometry")
    p.add_argument("--seed", type=int, default=0, help="base seed; scene k uses seed + k")
    p.add_argument("--jitter", type=float, default=0.0, help="point jitter sigma in meters")
    p.add_argument("--jitter-mode", choices=["rigid", "noisy"], default="rigid", help="jitter per instance or per point")
    p.add_argument("--drop-rate", type=float, default=0.0, help="fraction of instances removed")
    p.add_argument("--fp", type=int, default=0, help="false positives per kind per frame")
    p.add_argument("--conf-noise", type=float, default=0.0, help="confidence noise in [0, 1]")
    p.add_argument("--flip-rate", type=float, default=0.0, help="topology entry flip probability")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("loss-check", help="tabulate every loss component for aligned frames")
    _add_common(p)
    p.set_defaults(func=cmd_loss_check)

    p = sub.add_parser("validate", help="schema and invariant audit")
    p.add_argument("--gt", action="append", help="scene file or directory (repeatable)")
    p.add_argument("--pred", action="append", help="prediction file or directory (repeatable)")
    p.add_argument("--config", help="flat JSON config")
    p.add_argument("--bev-rows", type=int, help="BEV rows along x (default 200)")
    p.add_argument("--bev-cols", type=int, help="BEV columns along y (default 100)")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, scene_io.SceneFormatError, scene_io.SceneValidationError, FrameAlignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to exit 1
        log.debug("internal error", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
