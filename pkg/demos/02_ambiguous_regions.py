"""
Where the sweep loses confidence
================================

A composite scene has three bands: random texture, a flat surface with
sensor noise, and a repeated stripe pattern. Matching in the flat band is
ill-posed, so its predictions drift away from the ramp as the right image
shifts. The confidence maps are written as grayscale PNGs to ``demo_out/``.
"""

from pathlib import Path

import numpy as np

from dpsconf import BuiltinMatcher, ConfidenceParams, MatcherConfig, SweepSpec, sweep_confidence
from dpsconf.imagery import save_gray_visualization, save_image
from dpsconf.synthetic import composite_scene

scene = composite_scene(height=120, width=320, seed=0)

# lr_check=False keeps every pixel, the way learned matchers report a dense map
config = MatcherConfig(d_max=64, lr_check=False)
res = sweep_confidence(scene.left, scene.right, SweepSpec(), BuiltinMatcher(config), ConfidenceParams(config.d_max))

c = res.confidence
for name, region in scene.regions.items():
    m = c.valid & region
    print(f"{name:<12} mean C {c.values[m].mean():.3f}   mean U {res.unreliability.values[m].mean():.3f}")

out = Path("demo_out")
out.mkdir(exist_ok=True)
save_image(scene.left, out / "composite_left.png")
save_gray_visualization(res.anchor, out / "composite_disparity.png", 255.0 / config.d_max)
save_gray_visualization(c, out / "composite_confidence.png", 255.0)
print(f"wrote images to {out.resolve()}")

# U = 1 maps to C = 0.5 under the default sigma
print("C at U=1:", float(np.exp(-ConfidenceParams(64).sigma / 64)))
