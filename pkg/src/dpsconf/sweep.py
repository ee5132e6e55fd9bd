"""Disparity plane sweep.

The right image is shifted horizontally by each integer ``k`` in the sweep
and matched against the unchanged left image. With ``x_R = x_L - d``, a
shift that samples the right image at ``x + k`` raises every correct
disparity by exactly ``k``; the stack of predictions is compared against
the ramp ``anchor + k`` built from the zero-shift prediction.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .imagery import DisparityMap, RasterImage, save_disparity, save_image
from .matcher import DimensionMismatchError

logger = logging.getLogger(__name__)

Matcher = Callable[[RasterImage, RasterImage], DisparityMap]

__all__ = [
    "SweepError",
    "SweepSpec",
    "DisparityVolume",
    "shift_right_image",
    "run_sweep",
    "build_target_volume",
    "symmetric_shifts",
    "step_shifts",
]


class SweepError(RuntimeError):
    """A matcher call failed; ``shift`` names the offending shift."""

    def __init__(self, shift: int, cause: BaseException):
        super().__init__(f"matcher failed at shift {shift}: {cause}")
        self.shift = shift
        self.cause = cause


@dataclass(frozen=True)
class SweepSpec:
    """Ordered, strictly increasing integer shifts containing 0 once."""

    shifts: tuple[int, ...] = (-2, -1, 0, 1, 2)

    def __post_init__(self):
        shifts = tuple(int(k) for k in self.shifts)
        if not shifts:
            raise ValueError("a sweep needs at least one shift")
        if any(b <= a for a, b in zip(shifts, shifts[1:])):
            raise ValueError(f"shifts must be strictly increasing, got {list(shifts)}")
        if 0 not in shifts:
            raise ValueError("shifts must contain 0 (the anchor)")
        object.__setattr__(self, "shifts", shifts)

    @classmethod
    def from_n_k(cls, n: int, k: int) -> "SweepSpec":
        """Symmetric sweep [-k, k] with unit step; requires n == 2k + 1."""
        if n != 2 * k + 1:
            raise ValueError(f"N={n}, K={k}: the shorthand requires N = 2K + 1")
        return cls(symmetric_shifts(k))

    @property
    def n(self) -> int:
        return len(self.shifts)

    @property
    def anchor_index(self) -> int:
        return self.shifts.index(0)


def symmetric_shifts(k: int) -> tuple[int, ...]:
    if k < 0:
        raise ValueError("K must be non-negative")
    return tuple(range(-k, k + 1))


def step_shifts(step: int) -> tuple[int, ...]:
    """Three-shift sweep {-step, 0, +step}."""
    if step < 1:
        raise ValueError("step size must be >= 1")
    return (-step, 0, step)


@dataclass(frozen=True)
class DisparityVolume:
    """Stack of N disparity maps indexed by shift, float64 (N, H, W).

    Shifts must be distinct and include 0 but need not be sorted, so a
    volume can be permuted slice-wise together with its shift list.
    """

    shifts: tuple[int, ...]
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        shifts = tuple(int(k) for k in self.shifts)
        values = np.array(self.values, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if values.ndim != 3 or valid.shape != values.shape:
            raise ValueError(f"values {values.shape} and mask {valid.shape} must be matching (N, H, W) stacks")
        if len(shifts) != values.shape[0]:
            raise ValueError(f"{len(shifts)} shifts but {values.shape[0]} slices")
        if len(set(shifts)) != len(shifts) or 0 not in shifts:
            raise ValueError("shifts must be distinct and contain 0")
        if not np.all(np.isfinite(values[valid])):
            raise ValueError("valid entries must be finite")
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_maps(cls, shifts: Sequence[int], maps: Sequence[DisparityMap]) -> "DisparityVolume":
        if len({m.shape for m in maps}) > 1:
            raise ValueError("all slices must share the same dimensions")
        return cls(tuple(shifts), np.stack([m.values for m in maps]), np.stack([m.valid for m in maps]))

    @property
    def n(self) -> int:
        return len(self.shifts)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1:]

    @property
    def anchor_index(self) -> int:
        return self.shifts.index(0)

    def slice(self, i: int) -> DisparityMap:
        return DisparityMap(self.values[i], self.valid[i])

    @property
    def slices(self) -> list[DisparityMap]:
        return [self.slice(i) for i in range(self.n)]

    @property
    def anchor(self) -> DisparityMap:
        return self.slice(self.anchor_index)

    @property
    def joint_valid(self) -> np.ndarray:
        return np.logical_and.reduce(self.valid, axis=0)

    def permuted(self, order: Sequence[int]) -> "DisparityVolume":
        order = list(order)
        return DisparityVolume(tuple(self.shifts[i] for i in order), self.values[order], self.valid[order])


def shift_right_image(right: RasterImage, k: int) -> RasterImage:
    """out(x, y) = right(x + k, y); out-of-range columns replicate the edge."""
    width = right.width
    if abs(k) >= width:
        raise ValueError(f"|shift| = {abs(k)} must be smaller than the image width {width}")
    if k == 0:
        return right
    src = np.clip(np.arange(width) + k, 0, width - 1)
    return RasterImage(np.asarray(right.data)[:, src])


def run_sweep(
    left: RasterImage,
    right: RasterImage,
    spec: SweepSpec,
    matcher: Matcher,
    parallel: int = 1,
    dump_dir=None,
) -> DisparityVolume:
    """Match the left image against every shifted right image.

    Up to ``parallel`` matcher calls run concurrently; the slice order is
    always the shift order.
    """
    if left.shape != right.shape:
        raise DimensionMismatchError(f"left {left.shape} and right {right.shape} differ in size (dimension mismatch)")
    shifted = [shift_right_image(right, k) for k in spec.shifts]

    def one(i):
        k = spec.shifts[i]
        try:
            return matcher(left, shifted[i])
        except Exception as exc:
            raise SweepError(k, exc) from exc

    if parallel > 1 and spec.n > 1:
        with ThreadPoolExecutor(max_workers=min(parallel, spec.n)) as pool:
            slices = list(pool.map(one, range(spec.n)))
    else:
        slices = [one(i) for i in range(spec.n)]

    if dump_dir is not None:
        dump = Path(dump_dir)
        dump.mkdir(parents=True, exist_ok=True)
        for k, img, disp in zip(spec.shifts, shifted, slices):
            save_image(img, dump / f"shift_{k}.png")
            save_disparity(DisparityMap(np.maximum(disp.values, 0), disp.valid), dump / f"disp_{k}.pfm", "pfm")
    return DisparityVolume.from_maps(spec.shifts, slices)


def build_target_volume(anchor: DisparityMap, spec: SweepSpec | Sequence[int]) -> DisparityVolume:
    """Ideal ramp: slice i = anchor + shifts[i], anchor mask in every slice.

    Targets are not clamped to the matcher's disparity range.
    """
    shifts = spec.shifts if isinstance(spec, SweepSpec) else tuple(spec)
    base = anchor.values.astype(np.float64)
    values = np.stack([np.where(anchor.valid, base + k, 0.0) for k in shifts])
    valid = np.broadcast_to(anchor.valid, values.shape)
    return DisparityVolume(shifts, values, valid)
