import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapeval.core import NUM_POINTS, validate_frame
from mapeval.metrics import MetricConfig, det_l, evaluate
from mapeval.scene_io import archive_to_dict, write_archive
from mapeval.synthetic import PerturbationSpec, generate_scene, perturb


def lane_chain_edges(frame):
    return {(int(i), int(j)) for i, j in zip(*np.nonzero(frame.topology.ll_scores))}


def test_three_lane_chain():
    frame = generate_scene(3, 0, 0, seed=0).frames[0]
    assert lane_chain_edges(frame) == {(0, 1), (1, 2)}


def test_te_attached_to_chain_heads():
    frame = generate_scene(8, 0, 3, seed=0).frames[0]
    # Two chains of four: heads are lanes 0 and 4.
    assert {(int(i), int(j)) for i, j in zip(*np.nonzero(frame.topology.lt_scores))} == {(0, 0), (4, 1), (0, 2)}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 44), st.integers(0, 16), st.integers(0, 20),
       st.sampled_from(["straight", "arc"]))
def test_generated_scenes_are_valid(seed, n_l, n_a, n_t, layout):
    archive = generate_scene(n_l, n_a, n_t, layout, seed=seed)
    assert archive.validate() == []
    frame = archive.frames[0]
    assert (len(frame.lane_segments), len(frame.areas), len(frame.traffic_elements)) == (n_l, n_a, n_t)
    for ls in frame.lane_segments:
        for line in ls.lines():
            assert len(line) == NUM_POINTS
            seg = np.linalg.norm(np.diff(line, axis=0), axis=1)
            assert np.max(np.abs(seg - seg.mean())) <= 1e-6
        # left boundary sits half a lane width away, on the +normal side
        d = np.diff(ls.centerline[:, :2], axis=0)[0]
        off = ls.left_boundary[0, :2] - ls.centerline[0, :2]
        assert np.linalg.norm(off) == pytest.approx(1.75, abs=1e-9)
        assert d[0] * off[1] - d[1] * off[0] > 0
    lines = [ln for ls in frame.lane_segments for ln in ls.lines()] + [a.curve for a in frame.areas]
    for line in lines:
        assert np.all(np.abs(line[:, 0]) <= 50) and np.all(np.abs(line[:, 1]) <= 25)
    assert all(j == i + 1 for i, j in lane_chain_edges(frame))


def test_capacity_limits_raise():
    with pytest.raises(ValueError):
        generate_scene(45, 0, 0)
    with pytest.raises(ValueError):
        generate_scene(0, 17, 0)
    with pytest.raises(ValueError):
        generate_scene(0, 0, 21)
    with pytest.raises(ValueError):
        generate_scene(-1, 0, 0)
    with pytest.raises(ValueError):
        generate_scene(2, 0, 0, "zigzag")


def test_seed_determinism_is_byte_level(tmp_path):
    spec = PerturbationSpec(point_jitter_sigma=0.7, drop_rate=0.2, false_positive_count=2, confidence_noise=0.5,
                            topology_flip_rate=0.1, seed=12, jitter_mode="noisy")
    blobs = []
    for k in range(2):
        gt = generate_scene(9, 5, 4, "arc", seed=12, n_frames=3)
        pred, exp = perturb(gt, spec)
        write_archive(gt, tmp_path / f"gt{k}.json")
        write_archive(pred, tmp_path / f"pred{k}.json")
        blobs.append(((tmp_path / f"gt{k}.json").read_bytes(), (tmp_path / f"pred{k}.json").read_bytes(), exp))
    assert blobs[0] == blobs[1]
    other = generate_scene(9, 5, 4, "arc", seed=13, n_frames=3)
    assert archive_to_dict(other) != archive_to_dict(generate_scene(9, 5, 4, "arc", seed=12, n_frames=3))


def test_perturbation_spec_validation():
    for bad in ({"drop_rate": 1.2}, {"confidence_noise": -0.1}, {"topology_flip_rate": 2.0},
                {"point_jitter_sigma": -1.0}, {"false_positive_count": -1}, {"jitter_mode": "wobbly"}):
        with pytest.raises(ValueError):
            PerturbationSpec(**bad)


def test_zero_jitter_is_identity():
    gt = generate_scene(7, 4, 3, "arc", seed=4, n_frames=2)
    pred, exp = perturb(gt, PerturbationSpec(seed=4))
    assert [f.lane_segments for f in pred.frames] == [f.lane_segments for f in gt.frames]
    report = evaluate(pred.frames, gt.frames)
    assert report.olus == 1.0
    assert exp.olus == 1.0


def test_drop_two_of_ten():
    gt = generate_scene(10, 0, 0, seed=0)
    pred, exp = perturb(gt, PerturbationSpec(drop_rate=0.2, seed=0))
    assert exp.dropped["lanes"] == 2
    assert len(pred.frames[0].lane_segments) == 8
    assert abs(det_l(pred.frames, gt.frames).value - 0.8) <= 1e-12
    assert exp.det_l == pytest.approx(0.8, abs=1e-12)


def test_rigid_offset_frechet_family():
    gt = generate_scene(6, 0, 0, seed=1)
    pred, exp = perturb(gt, PerturbationSpec(rigid_offset=(0.0, 1.5, 0.0), seed=1))
    res = det_l(pred.frames, gt.frames)
    assert res.per_class["det_l/frechet"] == pytest.approx(2 / 3, abs=1e-12)
    assert exp.frechet_family == pytest.approx(2 / 3, abs=1e-12)


def test_false_positives_are_far_from_ground_truth():
    gt = generate_scene(40, 16, 20, "arc", seed=3)
    pred, _ = perturb(gt, PerturbationSpec(false_positive_count=9, seed=3))
    g = gt.frames[0]
    fps = [ls for ls in pred.frames[0].lane_segments if ls.id.startswith("fp")]
    assert len(fps) == 9
    gt_pts = np.concatenate([ls.centerline for ls in g.lane_segments])[:, :2]
    for fp in fps:
        d = np.linalg.norm(fp.centerline[:, None, :2] - gt_pts[None], axis=-1).min()
        assert d > 3 * max(MetricConfig().frechet_thresholds)


def outcome_cases():
    return st.builds(
        dict,
        seed=st.integers(0, 10**6),
        n_l=st.integers(0, 16),
        n_a=st.integers(0, 8),
        n_t=st.integers(0, 8),
        n_frames=st.integers(1, 3),
        layout=st.sampled_from(["straight", "arc"]),
        drop=st.sampled_from([0.0, 0.1, 0.25, 0.5, 1.0]),
        fp=st.integers(0, 3),
        noise=st.sampled_from([0.0, 0.5]),
        offset=st.sampled_from([None, (0.0, 0.5, 0.0), (0.6, 0.8, 0.0), (0.0, 1.5, 0.0)]),
        zero_ll=st.integers(0, 3),
        zero_lt=st.integers(0, 3),
    )


@settings(max_examples=40, deadline=None)
@given(outcome_cases())
def test_expected_outcome_matches_metrics(case):
    gt = generate_scene(case["n_l"], case["n_a"], case["n_t"], case["layout"], seed=case["seed"],
                        n_frames=case["n_frames"])
    spec = PerturbationSpec(drop_rate=case["drop"], false_positive_count=case["fp"], confidence_noise=case["noise"],
                            rigid_offset=case["offset"], zeroed_ll_edges=case["zero_ll"],
                            zeroed_lt_edges=case["zero_lt"], seed=case["seed"])
    pred, exp = perturb(gt, spec)
    report = evaluate(pred.frames, gt.frames)
    res = det_l(pred.frames, gt.frames)
    checks = {"det_l": report.det_l, "det_a": report.det_a, "det_t": report.det_t, "top_ll": report.top_ll,
              "top_lt": report.top_lt, "olus": report.olus,
              "frechet_family": res.per_class["det_l/frechet"], "chamfer_family": res.per_class["det_l/chamfer"]}
    for name, got in checks.items():
        want = getattr(exp, name)
        if want is not None:
            assert abs(got - want) <= 1e-9, (name, got, want)
    assert exp.det_t is not None


def test_zeroed_edges_lower_topology():
    gt = generate_scene(12, 0, 4, seed=5)
    base = evaluate(perturb(gt, PerturbationSpec(seed=5))[0].frames, gt.frames)
    pred, exp = perturb(gt, PerturbationSpec(zeroed_ll_edges=2, zeroed_lt_edges=1, seed=5))
    report = evaluate(pred.frames, gt.frames)
    assert report.top_ll < base.top_ll and report.top_lt < base.top_lt
    assert abs(report.top_ll - exp.top_ll) <= 1e-9 and abs(report.top_lt - exp.top_lt) <= 1e-9


def test_jitter_lowers_mean_det_l():
    means = []
    for sigma in (0.0, 0.5, 1.0, 2.0):
        vals = []
        for seed in range(8):
            gt = generate_scene(8, 0, 0, seed=seed)
            pred, _ = perturb(gt, PerturbationSpec(point_jitter_sigma=sigma, seed=seed))
            vals.append(det_l(pred.frames, gt.frames).value)
        means.append(np.mean(vals))
    assert all(a > b for a, b in zip(means, means[1:])), means


def test_jitter_keeps_frames_valid():
    gt = generate_scene(10, 6, 4, "arc", seed=2)
    pred, _ = perturb(gt, PerturbationSpec(point_jitter_sigma=2.0, jitter_mode="noisy", topology_flip_rate=0.5,
                                           confidence_noise=1.0, false_positive_count=3, seed=2))
    assert validate_frame(pred.frames[0]) == []
    assert dataclasses.replace(pred.frames[0]).frame_id == gt.frames[0].frame_id
