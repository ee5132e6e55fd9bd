"""Black-box stereo matchers: ``(left, right) -> DisparityMap``.

Two implementations share the callable interface:

* :class:`BuiltinMatcher`: census transform, Hamming matching cost,
  semi-global aggregation, winner-takes-all, optional parabola subpixel
  refinement and left-right consistency check. Deterministic.
* :class:`ExternalMatcher`: runs a user command that reads two PNGs and
  writes one disparity file.

The confidence pipeline only ever calls these as black boxes.
"""

from __future__ import annotations

import logging
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .imagery import (
    DISPARITY_FORMATS,
    DisparityMap,
    ImageryError,
    RasterImage,
    load_disparity,
    save_image,
)

logger = logging.getLogger(__name__)

__all__ = [
    "MatcherError",
    "DimensionMismatchError",
    "ImageTooSmallError",
    "ExternalMatcherError",
    "NonZeroExitError",
    "MatcherTimeoutError",
    "MissingOutputError",
    "MatcherConfig",
    "ExternalMatcherSpec",
    "MatchResult",
    "BuiltinMatcher",
    "ExternalMatcher",
    "census_transform",
    "matching_cost",
    "aggregate_costs",
    "match",
    "match_with_costs",
    "match_external",
]

LR_THRESHOLD = 1.0


class MatcherError(Exception):
    pass


class DimensionMismatchError(MatcherError, ValueError):
    pass


class ImageTooSmallError(MatcherError, ValueError):
    pass


class ExternalMatcherError(MatcherError):
    pass


class NonZeroExitError(ExternalMatcherError):
    def __init__(self, message, returncode=None, stderr=""):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


class MatcherTimeoutError(ExternalMatcherError):
    pass


class MissingOutputError(ExternalMatcherError):
    pass


@dataclass(frozen=True)
class MatcherConfig:
    d_max: int = 192
    census_window: tuple[int, int] = (9, 7)  # (width, height)
    p1: int = 10
    p2: int = 120
    paths: int = 8
    subpixel: bool = True
    lr_check: bool = True

    def __post_init__(self):
        object.__setattr__(self, "census_window", tuple(int(v) for v in self.census_window))
        if not 0 < self.d_max <= 1024:
            raise ValueError(f"d_max must be in (0, 1024], got {self.d_max}")
        if not 0 <= self.p1 <= self.p2:
            raise ValueError(f"need p2 >= p1 >= 0, got p1={self.p1}, p2={self.p2}")
        w, h = self.census_window
        if w < 3 or h < 3 or w % 2 == 0 or h % 2 == 0:
            raise ValueError(f"census window dims must be odd and >= 3, got {self.census_window}")
        if w * h - 1 > 64:
            raise ValueError("census window must have at most 64 comparison bits")
        if self.paths not in (4, 8):
            raise ValueError(f"paths must be 4 or 8, got {self.paths}")

    @property
    def census_bits(self) -> int:
        w, h = self.census_window
        return w * h - 1


def census_transform(gray: np.ndarray, window: tuple[int, int]) -> np.ndarray:
    """Census signature per pixel: bit set where neighbor < center.

    Borders use edge replication so every pixel gets a signature.
    """
    w, h = window
    rx, ry = w // 2, h // 2
    H, W = gray.shape
    padded = np.pad(gray, ((ry, ry), (rx, rx)), mode="edge")
    codes = np.zeros((H, W), dtype=np.uint64)
    one = np.uint64(1)
    for dy in range(-ry, ry + 1):
        for dx in range(-rx, rx + 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[ry + dy : ry + dy + H, rx + dx : rx + dx + W]
            codes = (codes << one) | (nb < gray).astype(np.uint64)
    return codes


def matching_cost(left_codes: np.ndarray, right_codes: np.ndarray, d_max: int, n_bits: int) -> np.ndarray:
    """Hamming cost volume of shape (H, W, d_max + 1), uint8.

    cost[y, x, d] compares left (x, y) with right (x - d, y); columns with
    x - d < 0 get the maximal cost ``n_bits``.
    """
    H, W = left_codes.shape
    cost = np.full((H, W, d_max + 1), n_bits, dtype=np.uint8)
    for d in range(min(d_max, W - 1) + 1):
        x = left_codes[:, d:] ^ right_codes[:, : W - d]
        cost[:, d:, d] = np.bitwise_count(x)
    return cost


_DIRECTIONS_4 = ((0, 1), (0, -1), (1, 0), (-1, 0))
_DIRECTIONS_8 = _DIRECTIONS_4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


@numba.njit(cache=True, nogil=True)
def _aggregate_direction(cost, total, dy, dx, p1, p2):
    H, W, D = cost.shape
    prev = np.zeros((W, D), dtype=np.int32)
    cur = np.zeros((W, D), dtype=np.int32)
    prev_min = np.zeros(W, dtype=np.int32)
    cur_min = np.zeros(W, dtype=np.int32)
    for iy in range(H):
        y = iy if dy >= 0 else H - 1 - iy
        for ix in range(W):
            x = ix if dx >= 0 else W - 1 - ix
            py = y - dy
            px = x - dx
            if py < 0 or py >= H or px < 0 or px >= W:
                m = np.int32(2147483647)
                for d in range(D):
                    v = np.int32(cost[y, x, d])
                    cur[x, d] = v
                    if v < m:
                        m = v
                cur_min[x] = m
            else:
                if dy == 0:
                    src = cur
                    smin = cur_min[px]
                else:
                    src = prev
                    smin = prev_min[px]
                m = np.int32(2147483647)
                for d in range(D):
                    best = src[px, d]
                    if d > 0 and src[px, d - 1] + p1 < best:
                        best = src[px, d - 1] + p1
                    if d < D - 1 and src[px, d + 1] + p1 < best:
                        best = src[px, d + 1] + p1
                    if smin + p2 < best:
                        best = smin + p2
                    v = np.int32(cost[y, x, d]) + best - smin
                    cur[x, d] = v
                    if v < m:
                        m = v
                cur_min[x] = m
            for d in range(D):
                total[y, x, d] += cur[x, d]
        prev, cur = cur, prev
        prev_min, cur_min = cur_min, prev_min


def aggregate_costs(cost: np.ndarray, p1: int, p2: int, paths: int = 8) -> np.ndarray:
    """Sum of semi-global path costs over 4 or 8 directions, int32 (H, W, D)."""
    total = np.zeros(cost.shape, dtype=np.int32)
    directions = _DIRECTIONS_8 if paths == 8 else _DIRECTIONS_4
    cost = np.ascontiguousarray(cost)
    for dy, dx in directions:
        _aggregate_direction(cost, total, dy, dx, np.int32(p1), np.int32(p2))
    return total


def _subpixel(total: np.ndarray, disp: np.ndarray) -> np.ndarray:
    D = total.shape[2]
    out = disp.astype(np.float64)
    inner = (disp > 0) & (disp < D - 1)
    ys, xs = np.nonzero(inner)
    d = disp[ys, xs]
    c0 = total[ys, xs, d - 1].astype(np.float64)
    c1 = total[ys, xs, d].astype(np.float64)
    c2 = total[ys, xs, d + 1].astype(np.float64)
    denom = c0 - 2.0 * c1 + c2
    offset = np.zeros_like(c1)
    ok = denom > 0
    offset[ok] = (c0[ok] - c2[ok]) / (2.0 * denom[ok])
    out[ys, xs] = d + offset
    return out


def _right_disparity(total: np.ndarray) -> np.ndarray:
    """Winner-takes-all for the right view, reusing the left-referenced volume."""
    H, W, D = total.shape
    big = np.iinfo(np.int32).max
    right = np.full((H, W, D), big, dtype=np.int32)
    for d in range(min(D, W)):
        right[:, : W - d, d] = total[:, d:, d]
    return np.argmin(right, axis=2)


@dataclass(frozen=True)
class MatchResult:
    disparity: DisparityMap
    winner_cost: np.ndarray  # aggregated cost at the selected integer disparity


def _check_pair(left: RasterImage, right: RasterImage, config: MatcherConfig):
    if left.shape != right.shape:
        raise DimensionMismatchError(f"left {left.shape} and right {right.shape} differ in size (dimension mismatch)")
    w, h = config.census_window
    if left.width < w or left.height < h:
        raise ImageTooSmallError(
            f"image {left.width}x{left.height} is smaller than the {w}x{h} census window"
        )


def match_with_costs(left: RasterImage, right: RasterImage, config: MatcherConfig = MatcherConfig()) -> MatchResult:
    _check_pair(left, right, config)
    lc = census_transform(left.gray(), config.census_window)
    rc = census_transform(right.gray(), config.census_window)
    cost = matching_cost(lc, rc, config.d_max, config.census_bits)
    total = aggregate_costs(cost, config.p1, config.p2, config.paths)
    disp_int = np.argmin(total, axis=2)  # first minimum: smallest disparity wins ties
    winner = np.take_along_axis(total, disp_int[:, :, None], axis=2)[:, :, 0]
    disp = _subpixel(total, disp_int) if config.subpixel else disp_int.astype(np.float64)
    valid = np.ones(disp.shape, dtype=bool)
    if config.lr_check:
        disp_r = _right_disparity(total)
        H, W = disp.shape
        xr = np.arange(W)[None, :] - np.rint(disp).astype(np.int64)
        inside = xr >= 0
        xr = np.clip(xr, 0, W - 1)
        dr = np.take_along_axis(disp_r, xr, axis=1)
        valid = inside & (np.abs(disp - dr) <= LR_THRESHOLD)
    disp = np.clip(disp, 0.0, config.d_max)
    disp = np.where(valid, disp, 0.0)
    return MatchResult(DisparityMap(disp, valid), winner)


def match(left: RasterImage, right: RasterImage, config: MatcherConfig = MatcherConfig()) -> DisparityMap:
    """Built-in census + semi-global matcher."""
    return match_with_costs(left, right, config).disparity


class BuiltinMatcher:
    """Callable wrapper around :func:`match` with a fixed configuration."""

    def __init__(self, config: MatcherConfig = MatcherConfig()):
        self.config = config

    @property
    def d_max(self) -> int:
        return self.config.d_max

    def __call__(self, left: RasterImage, right: RasterImage) -> DisparityMap:
        return match(left, right, self.config)

    def match_with_costs(self, left: RasterImage, right: RasterImage) -> MatchResult:
        return match_with_costs(left, right, self.config)

    def __repr__(self):
        return f"BuiltinMatcher({self.config!r})"


_PLACEHOLDERS = ("{left}", "{right}", "{out}")


@dataclass(frozen=True)
class ExternalMatcherSpec:
    command_template: str
    work_dir: str | Path
    output_format: str = "pfm"
    timeout: float = 600.0

    def __post_init__(self):
        for ph in _PLACEHOLDERS:
            n = self.command_template.count(ph)
            if n != 1:
                raise ValueError(f"command template must contain {ph} exactly once (found {n})")
        if self.output_format not in DISPARITY_FORMATS:
            raise ValueError(f"output_format must be one of {DISPARITY_FORMATS}")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")


def match_external(left: RasterImage, right: RasterImage, spec: ExternalMatcherSpec) -> DisparityMap:
    """Run an external matcher through the file exchange contract.

    Each call works in its own fresh subdirectory of ``spec.work_dir``,
    which is removed afterwards.
    """
    if left.shape != right.shape:
        raise DimensionMismatchError(f"left {left.shape} and right {right.shape} differ in size (dimension mismatch)")
    work_dir = Path(spec.work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    call_dir = Path(tempfile.mkdtemp(prefix="match-", dir=work_dir))
    try:
        suffix = ".pfm" if spec.output_format == "pfm" else ".png"
        paths = {
            "{left}": str(call_dir / "left.png"),
            "{right}": str(call_dir / "right.png"),
            "{out}": str(call_dir / ("disparity" + suffix)),
        }
        save_image(left, paths["{left}"])
        save_image(right, paths["{right}"])
        argv = []
        for token in shlex.split(spec.command_template):
            for ph, value in paths.items():
                token = token.replace(ph, value)
            argv.append(token)
        logger.debug("running external matcher: %s", argv)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=spec.timeout, cwd=call_dir)
        except subprocess.TimeoutExpired as exc:
            raise MatcherTimeoutError(f"external matcher exceeded {spec.timeout}s: {argv[0]}") from exc
        except OSError as exc:
            raise NonZeroExitError(f"cannot launch external matcher {argv[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            diag = (proc.stderr or proc.stdout or "").strip()
            raise NonZeroExitError(
                f"external matcher exited with status {proc.returncode}: {diag}",
                returncode=proc.returncode,
                stderr=proc.stderr,
            )
        out = Path(paths["{out}"])
        if not out.is_file():
            raise MissingOutputError(f"external matcher produced no output at {out}")
        try:
            disp = load_disparity(out, spec.output_format)
        except ImageryError as exc:
            raise MissingOutputError(f"external matcher output unreadable: {exc}") from exc
        if disp.shape != left.shape:
            raise DimensionMismatchError(f"external matcher output {disp.shape} does not match inputs {left.shape}")
        return disp
    finally:
        shutil.rmtree(call_dir, ignore_errors=True)


class ExternalMatcher:
    def __init__(self, spec: ExternalMatcherSpec, d_max: int = 192):
        self.spec = spec
        self.d_max = d_max

    def __call__(self, left: RasterImage, right: RasterImage) -> DisparityMap:
        return match_external(left, right, self.spec)

    def __repr__(self):
        return f"ExternalMatcher({self.spec.command_template!r})"
