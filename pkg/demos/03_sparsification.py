"""
Scoring confidence with sparsification
======================================

Remove pixels from least to most confident and track the bad-pixel rate of
what remains. A good confidence map drives the curve down quickly. The
ground-truth ordering gives the lower bound and a random map stays near the
overall error rate.
"""

import numpy as np

from dpsconf import (
    BuiltinMatcher,
    ConfidenceParams,
    MatcherConfig,
    SweepSpec,
    ground_truth_confidence,
    msm_confidence,
    random_confidence,
    sparsification_auc,
    sweep_confidence,
)
from dpsconf.synthetic import composite_scene

scene = composite_scene(height=120, width=320, seed=1)
matcher = BuiltinMatcher(MatcherConfig(d_max=64, lr_check=False))
res = sweep_confidence(scene.left, scene.right, SweepSpec(), matcher, ConfidenceParams(64))

maps = {
    "sweep": res.confidence,
    "msm": msm_confidence(scene.left, scene.right, matcher),
    "random": random_confidence(scene.gt.shape, res.anchor.valid, seed=0),
    "oracle": ground_truth_confidence(res.anchor, scene.gt),
}

print(f"{'method':<8} {'AUC x100':>9} {'optimal x100':>13}")
for name, conf in maps.items():
    r = sparsification_auc(conf, res.anchor, scene.gt, method=name)
    print(f"{name:<8} {100 * r.auc:9.3f} {100 * r.optimal_auc:13.3f}")

# the sweep curve, coarsely
r = sparsification_auc(res.confidence, res.anchor, scene.gt)
print("density  error rate")
for rho, err in r.curve[::4] + (r.curve[-1],):
    print(f"{rho:7.2f}  {err:.4f}  " + "#" * int(np.round(60 * err)))
