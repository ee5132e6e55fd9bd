"""Stereo confidence from a disparity plane sweep.

A stereo matcher is run on the left image against horizontally shifted
copies of the right image. Where correspondence is unambiguous, each
prediction moves by exactly the applied shift; the mean deviation from that
ideal ramp is the unreliability, mapped to a confidence in (0, 1].
"""

from .confidence import (
    ConfidenceParams,
    SweepConfidence,
    confidence_from_unreliability,
    sweep_confidence,
    unreliability,
)
from .evaluation import (
    EvalParams,
    EvalReport,
    baseline_msm,
    ground_truth_confidence,
    msm_confidence,
    optimal_auc,
    pooled_auc,
    random_confidence,
    sparsification_auc,
)
from .imagery import (
    ConfidenceMap,
    DisparityMap,
    Raster,
    RasterImage,
    load_disparity,
    load_image,
    save_disparity,
    save_gray_visualization,
    save_image,
)
from .matcher import (
    BuiltinMatcher,
    ExternalMatcher,
    ExternalMatcherSpec,
    MatcherConfig,
    match,
    match_external,
    match_with_costs,
)
from .sweep import DisparityVolume, SweepSpec, build_target_volume, run_sweep, shift_right_image

__version__ = "0.1.0"

__all__ = [
    "ConfidenceParams",
    "SweepConfidence",
    "confidence_from_unreliability",
    "sweep_confidence",
    "unreliability",
    "EvalParams",
    "EvalReport",
    "baseline_msm",
    "ground_truth_confidence",
    "msm_confidence",
    "optimal_auc",
    "pooled_auc",
    "random_confidence",
    "sparsification_auc",
    "ConfidenceMap",
    "DisparityMap",
    "Raster",
    "RasterImage",
    "load_disparity",
    "load_image",
    "save_disparity",
    "save_gray_visualization",
    "save_image",
    "BuiltinMatcher",
    "ExternalMatcher",
    "ExternalMatcherSpec",
    "MatcherConfig",
    "match",
    "match_external",
    "match_with_costs",
    "DisparityVolume",
    "SweepSpec",
    "build_target_volume",
    "run_sweep",
    "shift_right_image",
]
