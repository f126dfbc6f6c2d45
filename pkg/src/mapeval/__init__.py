"""Evaluation, loss and BEV-target toolkit for mapless driving perception."""

from .assignment import Assignment, average_precision, hungarian_min_cost, match_at_threshold
from .core import (
    AreaInstance,
    BevGridSpec,
    FrameGroundTruth,
    FramePrediction,
    LaneSegment,
    LossWeights,
    MetricsReport,
    TopologyPrediction,
    TrafficElement,
    olus,
    validate_frame,
)
from .geometry import (
    box_giou,
    box_iou,
    chamfer,
    direction_cosine_mismatch,
    discrete_frechet,
    resample_polyline,
)
from .metrics import MetricConfig, det_a, det_l, det_t, evaluate, top_ll, top_lt
from .raster import BevMask, SdMap, area_boundary_mask, lane_segment_mask, rasterize_sdmap, world_to_cell
from .scene_io import SceneArchive, load_ground_truth, load_predictions, write_archive, write_report
from .synthetic import ExpectedOutcome, PerturbationSpec, generate_scene, perturb

__version__ = "0.1.0"
