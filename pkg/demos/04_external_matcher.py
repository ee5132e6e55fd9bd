"""
Plugging in an external matcher
===============================

Any program that reads a left and right PNG and writes a disparity map can
drive the sweep. Here the "external" program is a small Python script that
happens to call the built-in matcher, so the result can be compared with
the in-process run.
"""

import sys
import tempfile
import textwrap
from pathlib import Path

import numpy as np

from dpsconf import BuiltinMatcher, ConfidenceParams, ExternalMatcher, ExternalMatcherSpec, MatcherConfig, SweepSpec, sweep_confidence
from dpsconf.synthetic import planted_pair

work = Path(tempfile.mkdtemp(prefix="dpsconf-demo-"))
tool = work / "tool.py"
tool.write_text(textwrap.dedent("""
    import sys
    from dpsconf import BuiltinMatcher, MatcherConfig, load_image, save_disparity
    left, right, out = sys.argv[1:]
    disp = BuiltinMatcher(MatcherConfig(d_max=32))(load_image(left), load_image(right))
    save_disparity(disp, out, "pfm")
"""))

# each placeholder appears exactly once; paths are substituted per call
spec = ExternalMatcherSpec(f"{sys.executable} {tool} {{left}} {{right}} {{out}}", work / "runs", output_format="pfm")
external = ExternalMatcher(spec, d_max=32)

scene = planted_pair(40, 96, 6, seed=2)
params = ConfidenceParams(32)
a = sweep_confidence(scene.left, scene.right, SweepSpec(), external, params, parallel=5)
b = sweep_confidence(scene.left, scene.right, SweepSpec(), BuiltinMatcher(MatcherConfig(d_max=32)), params)

print("external vs in-process confidence identical:", np.array_equal(a.confidence.values, b.confidence.values))
print(f"mean confidence {a.confidence.values[a.confidence.valid].mean():.4f}")
