"""Sparsification ROC / AUC scoring of confidence maps.

Pixels are retained in order of decreasing confidence; for each density the
bad-pixel rate (|pred - gt| > tau) of the retained subset is recorded and
the curve is integrated. Lower AUC is better. Values are kept unscaled
here; report writers multiply by 100.
"""

from __future__ import annotations

import csv
import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .imagery import ConfidenceMap, DisparityMap

__all__ = [
    "EvalParams",
    "EvalReport",
    "BaselineUnavailableError",
    "ground_truth_confidence",
    "sparsification_auc",
    "sparsify",
    "optimal_auc",
    "baseline_msm",
    "msm_confidence",
    "random_confidence",
    "pooled_auc",
    "write_report_csv",
    "write_curve_csv",
    "REPORT_FIELDS",
]

DEFAULT_DENSITIES = tuple(round(0.05 * i, 2) for i in range(1, 21))


class BaselineUnavailableError(RuntimeError):
    """The minimum-cost baseline needs the built-in matcher's cost volume."""


@dataclass(frozen=True)
class EvalParams:
    tau: float = 3.0
    densities: tuple[float, ...] = DEFAULT_DENSITIES

    def __post_init__(self):
        dens = tuple(float(r) for r in self.densities)
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not dens or dens[-1] != 1.0:
            raise ValueError("densities must end at 1.0")
        if dens[0] <= 0 or any(b <= a for a, b in zip(dens, dens[1:])):
            raise ValueError("densities must be strictly increasing within (0, 1]")
        object.__setattr__(self, "densities", dens)


@dataclass(frozen=True)
class EvalReport:
    epsilon: float
    auc: float
    optimal_auc: float
    curve: tuple[tuple[float, float], ...]
    n_pixels: int
    method: str = ""
    image: str = ""

    def row(self) -> dict:
        return {
            "image": self.image,
            "method": self.method,
            "epsilon": f"{self.epsilon:.6f}",
            "auc_x100": f"{100.0 * self.auc:.4f}",
            "optimal_x100": f"{100.0 * self.optimal_auc:.4f}",
            "n_pixels": self.n_pixels,
        }


REPORT_FIELDS = ("image", "method", "epsilon", "auc_x100", "optimal_x100", "n_pixels")


def _check_shapes(*maps):
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def ground_truth_confidence(pred: DisparityMap, gt: DisparityMap, tau: float = 3.0, d_max: float | None = None) -> ConfidenceMap:
    """1 where |pred - gt| <= tau, else 0; valid where both inputs are.

    Ground truth above ``d_max`` is excluded when ``d_max`` is given.
    """
    _check_shapes(pred, gt)
    valid = pred.valid & gt.valid
    if d_max is not None:
        valid &= gt.values <= d_max
    err = np.abs(pred.values.astype(np.float64) - gt.values.astype(np.float64))
    conf = np.where(valid & (err <= tau), 1.0, 0.0)
    return ConfidenceMap(conf, valid)


def optimal_auc(epsilon: float) -> float:
    """Area under the sparsification curve of a perfect ordering."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must be in [0, 1), got {epsilon}")
    if epsilon == 0.0:
        return 0.0
    return epsilon + (1.0 - epsilon) * math.log1p(-epsilon)


def _subset_sizes(densities: Sequence[float], n: int) -> np.ndarray:
    # round before ceil so that e.g. 0.15 * 100 does not become 16
    return np.array([max(1, math.ceil(round(r * n, 9))) for r in densities], dtype=np.int64)


def sparsify(confidence: np.ndarray, bad: np.ndarray, densities: Sequence[float]) -> tuple[np.ndarray, float]:
    """Curve and AUC for flat arrays of confidence and bad-pixel flags.

    Ties in confidence keep the input order (stable sort). The first
    density contributes a rectangle; later intervals are trapezoids.
    """
    confidence = np.asarray(confidence, dtype=np.float64)
    bad = np.asarray(bad, dtype=bool)
    n = confidence.size
    if n == 0:
        raise ValueError("no valid pixels to evaluate")
    order = np.argsort(-confidence, kind="stable")
    cum_bad = np.cumsum(bad[order])
    sizes = _subset_sizes(densities, n)
    hits = cum_bad[sizes - 1]
    rates = hits / sizes
    # integrate in rationals (densities taken as the decimals they print as)
    # so the result is the correctly rounded area of the stated curve
    q = [Fraction(int(b), int(m)) for b, m in zip(hits, sizes)]
    dens = [Fraction(repr(float(r))) for r in densities]
    area = dens[0] * q[0]
    for i in range(1, len(q)):
        area += (dens[i] - dens[i - 1]) * (q[i] + q[i - 1]) / 2
    return rates, float(area)


def _eval_arrays(conf: ConfidenceMap, pred: DisparityMap, gt: DisparityMap, tau: float):
    _check_shapes(conf, pred, gt)
    valid = conf.valid & pred.valid & gt.valid
    err = np.abs(pred.values.astype(np.float64) - gt.values.astype(np.float64))
    return conf.values[valid], (err > tau)[valid]


def sparsification_auc(
    conf: ConfidenceMap,
    pred: DisparityMap,
    gt: DisparityMap,
    params: EvalParams = EvalParams(),
    method: str = "",
    image: str = "",
) -> EvalReport:
    """Score ``conf`` on the pixels valid in all three maps."""
    c, bad = _eval_arrays(conf, pred, gt, params.tau)
    return _report(c, bad, params, method, image)


def _report(c, bad, params, method, image):
    if c.size == 0:
        raise ValueError("no jointly valid pixels to evaluate")
    rates, auc = sparsify(c, bad, params.densities)
    eps = float(bad.mean())
    curve = tuple(zip(params.densities, (float(r) for r in rates)))
    opt = optimal_auc(eps) if eps < 1.0 else 1.0
    return EvalReport(eps, auc, opt, curve, int(c.size), method, image)


def pooled_auc(
    items: Iterable[tuple[ConfidenceMap, DisparityMap, DisparityMap]],
    params: EvalParams = EvalParams(),
    method: str = "",
) -> EvalReport:
    """Single report over the concatenated pixels of several images."""
    cs, bads = [], []
    for conf, pred, gt in items:
        c, bad = _eval_arrays(conf, pred, gt, params.tau)
        cs.append(c)
        bads.append(bad)
    if not cs:
        raise ValueError("no images to pool")
    return _report(np.concatenate(cs), np.concatenate(bads), params, method, "pooled")


def baseline_msm(winner_cost: np.ndarray, valid: np.ndarray | None = None) -> ConfidenceMap:
    """Minimum-cost baseline: negated winner cost, min-max scaled to [0, 1].

    A constant cost map yields confidence 1 everywhere. This is a simple
    comparison baseline, not part of the sweep method.
    """
    cost = np.asarray(winner_cost, dtype=np.float64)
    if valid is None:
        valid = np.ones(cost.shape, dtype=bool)
    v = cost[valid]
    conf = np.zeros(cost.shape)
    if v.size:
        lo, hi = v.min(), v.max()
        conf[valid] = 1.0 if hi == lo else (hi - cost[valid]) / (hi - lo)
    return ConfidenceMap(conf, valid)


def msm_confidence(left, right, matcher) -> ConfidenceMap:
    """Minimum-cost baseline for a matcher that exposes its cost volume."""
    from .matcher import BuiltinMatcher

    if not isinstance(matcher, BuiltinMatcher):
        raise BaselineUnavailableError("the minimum-cost baseline needs the built-in matcher")
    result = matcher.match_with_costs(left, right)
    return baseline_msm(result.winner_cost, result.disparity.valid)


def random_confidence(shape: tuple[int, int], valid: np.ndarray, seed: int) -> ConfidenceMap:
    """Uniform i.i.d. confidence; a chance-level control."""
    rng = np.random.default_rng(seed)
    return ConfidenceMap(rng.random(shape), valid)


def write_report_csv(reports: Iterable[EvalReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


def write_curve_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("density", "error_rate"))
        for rho, err in report.curve:
            w.writerow((f"{rho:g}", f"{err:.6f}"))
