import sys

import numpy as np
import pytest

from mapeval.core import (
    AreaInstance,
    FrameGroundTruth,
    FramePrediction,
    LaneSegment,
    TopologyPrediction,
    TrafficElement,
)


def straight_lane(lane_id, y=0.0, x0=0.0, x1=10.0, half_width=1.75, class_id=0, confidence=1.0, n=11):
    x = np.linspace(x0, x1, n)
    def line(off):
        return np.c_[x, np.full(n, y + off), np.zeros(n)]
    return LaneSegment(lane_id, line(0.0), line(half_width), line(-half_width),
                       class_id=class_id, confidence=confidence)


def shifted(lane, dy, confidence=None, lane_id=None):
    t = np.array([0.0, dy, 0.0])
    return LaneSegment(lane_id or lane.id, lane.centerline + t, lane.left_boundary + t, lane.right_boundary + t,
                       lane.class_id, lane.left_type, lane.right_type,
                       lane.confidence if confidence is None else confidence)


def square_area(area_id, x0, y0, side=5.0, class_id=0, confidence=1.0):
    c = [[x0, y0, 0], [x0 + side, y0, 0], [x0 + side, y0 + side, 0], [x0, y0 + side, 0], [x0, y0, 0]]
    return AreaInstance(area_id, c, class_id, confidence)


def as_prediction(frame):
    """Copy a ground-truth frame into a prediction frame."""
    return FramePrediction(frame.frame_id, frame.lane_segments, frame.areas, frame.traffic_elements,
                           frame.topology)


@pytest.fixture
def two_lane_frame():
    lanes = [straight_lane("a", y=0.0), straight_lane("b", y=3.5)]
    tes = [TrafficElement("t0", [100, 100, 200, 180], 3)]
    topo = TopologyPrediction([[0, 1], [0, 0]], [[1], [0]])
    return FrameGroundTruth("000000", lanes, [square_area("p0", 20, -10)], tes, topo)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
