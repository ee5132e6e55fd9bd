"""Unreliability and confidence from a disparity plane sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .imagery import ConfidenceMap, DisparityMap, Raster, RasterImage
from .sweep import DisparityVolume, Matcher, SweepSpec, build_target_volume, run_sweep

__all__ = [
    "ConfidenceParams",
    "SweepConfidence",
    "unreliability",
    "confidence_from_unreliability",
    "sweep_confidence",
]


@dataclass(frozen=True)
class ConfidenceParams:
    """``sigma`` defaults to ``d_max * ln 2`` so that U = 1 maps to C = 0.5."""

    d_max: float = 192
    sigma: float | None = None

    def __post_init__(self):
        if not self.d_max > 0:
            raise ValueError("d_max must be positive")
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.d_max * math.log(2.0))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def unreliability(pred: DisparityVolume, tgt: DisparityVolume) -> Raster:
    """Sum of |target - predicted| over all slices, divided by N - 1.

    The anchor slice contributes zero by construction. Output is valid only
    where every slice of both volumes is valid.
    """
    if pred.shifts != tgt.shifts:
        raise ValueError(f"shift lists differ: {pred.shifts} vs {tgt.shifts}")
    if pred.shape != tgt.shape:
        raise ValueError(f"volume dimensions differ: {pred.shape} vs {tgt.shape}")
    if pred.n < 2:
        raise ValueError("unreliability needs N >= 2 shifts")
    valid = pred.joint_valid & tgt.joint_valid
    resid = np.abs(tgt.values - pred.values)
    u = resid.sum(axis=0) / (pred.n - 1)
    u[~valid] = 0.0
    return Raster(u, valid)


def confidence_from_unreliability(u: Raster, params: ConfidenceParams) -> ConfidenceMap:
    c = np.exp(-params.sigma * u.values / params.d_max)
    c[~u.valid] = 0.0
    return ConfidenceMap(c, u.valid)


class SweepConfidence(NamedTuple):
    confidence: ConfidenceMap
    anchor: DisparityMap
    unreliability: Raster


def sweep_confidence(
    left: RasterImage,
    right: RasterImage,
    spec: SweepSpec,
    matcher: Matcher,
    params: ConfidenceParams,
    parallel: int = 1,
    dump_dir=None,
) -> SweepConfidence:
    """Full pipeline: sweep, anchored ramp, unreliability, confidence."""
    if spec.n < 2:
        raise ValueError("the confidence sweep needs N >= 2 shifts")
    pred = run_sweep(left, right, spec, matcher, parallel=parallel, dump_dir=dump_dir)
    anchor = pred.anchor
    tgt = build_target_volume(anchor, spec)
    u = unreliability(pred, tgt)
    return SweepConfidence(confidence_from_unreliability(u, params), anchor, u)
