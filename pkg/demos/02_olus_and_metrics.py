"""
From matches to a single score
==============================

Each sub-metric is an average precision over matching thresholds. The
overall score averages the three detection metrics with the square roots
of the two topology metrics; the square root lifts the typically low
topology numbers.
"""

from mapeval.core import olus
from mapeval.metrics import evaluate
from mapeval.scene_io import report_table
from mapeval.synthetic import PerturbationSpec, generate_scene, perturb

# The combination rule on its own, with the best component scores of the
# reference system (in percent: 42.95, 34.72, 82.15, 36.48, 41.91).
print("combined score of the reference components: %.5f\n" % olus(0.4295, 0.3472, 0.8215, 0.3648, 0.4191))

# A synthetic scene evaluated against itself scores exactly 1 everywhere.
gt = generate_scene(n_lanes=8, n_areas=4, n_tes=3, layout="arc", seed=0, n_frames=4)
perfect, _ = perturb(gt, PerturbationSpec())
print("self-evaluation")
print(report_table(evaluate(perfect.frames, gt.frames), breakdown=False))

# Drop a fifth of the instances, add a false positive of each kind and cut
# one lane-to-lane edge per scene. The generator also predicts the outcome.
spec = PerturbationSpec(drop_rate=0.2, false_positive_count=1, zeroed_ll_edges=1, seed=0)
pred, expected = perturb(gt, spec)
report = evaluate(pred.frames, gt.frames)
print("after dropping 20% and cutting an edge")
print(report_table(report))
print("generator's closed-form expectation: DET_l %.4f, TOP_ll %.4f, overall %.4f"
      % (expected.det_l, expected.top_ll, expected.olus))
