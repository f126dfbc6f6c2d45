"""
Weighted training losses
========================

Every head combines a handful of loss terms with fixed weights. Feeding a
value of 1 into every term exposes the weights directly; a real prediction
shows which terms dominate.
"""

from mapeval.losses import COMPONENT_NAMES, assign_frame, composite_losses, weigh_components
from mapeval.synthetic import PerturbationSpec, generate_scene, perturb

unit = {head: {name: 1.0 for name in names} for head, names in COMPONENT_NAMES.items()}
unit["ll"] = unit["lt"] = 1.0
for name, value in weigh_components(unit).items():
    print("%-6s %8.4f" % (name, value))
print()

# A noisy prediction of one synthetic frame, with predictions assigned to
# ground truth by the same Hungarian matching the metrics use.
gt = generate_scene(6, 4, 3, seed=3)
pred, _ = perturb(gt, PerturbationSpec(point_jitter_sigma=0.4, jitter_mode="noisy", confidence_noise=0.6, seed=3))
p, g = pred.frames[0], gt.frames[0]
breakdown = composite_losses(p, g, assignment=assign_frame(p, g))
for name, value in breakdown.rows():
    print("%-12s %10.5f" % (name, value))
