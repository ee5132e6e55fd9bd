"""Synthetic stereo scenes with known disparity.

Used by the test suite and the example scripts. All generators take an
explicit ``numpy.random.Generator`` or integer seed and are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imagery import DisparityMap, RasterImage, save_disparity, save_image


@dataclass(frozen=True)
class StereoScene:
    left: RasterImage
    right: RasterImage
    gt: DisparityMap
    regions: dict  # name -> boolean mask in left-image coordinates


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def noise_texture(height: int, width: int, seed=0) -> np.ndarray:
    """i.i.d. uniform 8-bit noise."""
    return _rng(seed).integers(0, 256, size=(height, width), dtype=np.uint8)


def planted_pair(height: int, width: int, disparity: int, seed=0) -> StereoScene:
    """Fronto-parallel noise scene with constant integer disparity.

    right(x, y) = texture(x + disparity, y), so left pixel x matches right
    pixel x - disparity.
    """
    tex = noise_texture(height, width + disparity, seed)
    left = tex[:, :width]
    right = tex[:, disparity : disparity + width]
    gt = np.full((height, width), float(disparity))
    return StereoScene(RasterImage(left), RasterImage(right), DisparityMap(gt), {"all": np.ones_like(gt, bool)})


def render_right(left_tex: np.ndarray, disparity: np.ndarray, fill: np.ndarray) -> np.ndarray:
    """Forward-warp a left texture to the right view.

    Larger disparities (nearer surfaces) win collisions; right pixels no
    left pixel lands on are taken from ``fill``.
    """
    H, W = left_tex.shape
    right = fill.copy()
    depth = np.full((H, W), -1, dtype=np.int64)
    d = disparity.astype(np.int64)
    for y in range(H):
        xr = np.arange(W) - d[y]
        for x in np.argsort(d[y], kind="stable"):
            if 0 <= xr[x] < W and d[y, x] >= depth[y, xr[x]]:
                right[y, xr[x]] = left_tex[y, x]
                depth[y, xr[x]] = d[y, x]
    return right


def composite_scene(
    height: int = 96,
    width: int = 160,
    background: int = 8,
    foreground: int = 16,
    sensor_noise: float = 2.0,
    stripe_period: int = 4,
    bands: tuple[int, int, int] = (1, 1, 1),
    seed=0,
) -> StereoScene:
    """Scene mixing textured, textureless and repeated-pattern regions.

    The image is split into three horizontal bands:

    * top: random texture (the well-posed case),
    * middle: flat gray plus independent per-view sensor noise,
    * bottom: vertical stripes with period ``stripe_period``.

    ``bands`` gives the relative heights of the three bands.

    A textured foreground rectangle at a larger disparity spans the textured
    band to add occlusion boundaries.
    """
    rng = _rng(seed)
    tex = rng.integers(0, 256, size=(height, width)).astype(np.float64)
    edges = np.rint(np.cumsum((0,) + tuple(bands)) / sum(bands) * height).astype(int)
    band = edges[1]
    textured = np.zeros((height, width), bool)
    textured[: edges[1]] = True
    flat = np.zeros((height, width), bool)
    flat[edges[1] : edges[2]] = True
    stripes = np.zeros((height, width), bool)
    stripes[edges[2] :] = True

    scene = tex.copy()
    scene[flat] = 128.0
    cols = np.arange(width)
    pattern = np.where((cols // (stripe_period // 2 or 1)) % 2 == 0, 60.0, 190.0)
    scene[stripes] = np.broadcast_to(pattern, (height, width))[stripes]

    disp = np.full((height, width), background, dtype=np.int64)
    fy0, fy1 = band // 4, band - band // 4
    fx0, fx1 = width // 3, width // 3 + width // 4
    disp[fy0:fy1, fx0:fx1] = foreground

    fill = rng.integers(0, 256, size=(height, width)).astype(np.float64)
    fill[flat] = 128.0
    fill[stripes] = np.broadcast_to(pattern, (height, width))[stripes]
    right = render_right(scene, disp, fill)

    left = scene + rng.normal(0.0, sensor_noise, size=scene.shape) * flat
    right = right + rng.normal(0.0, sensor_noise, size=scene.shape) * flat
    left = np.clip(np.rint(left), 0, 255).astype(np.uint8)
    right = np.clip(np.rint(right), 0, 255).astype(np.uint8)
    gt = DisparityMap(disp.astype(np.float64))
    return StereoScene(
        RasterImage(left),
        RasterImage(right),
        gt,
        {"textured": textured, "textureless": flat, "stripes": stripes},
    )


def write_dataset(root, scenes: dict) -> None:
    """Write ``{name: StereoScene}`` as <root>/{left,right,gt}/<name>.png.

    Ground truth is stored as KITTI-style 16-bit PNG.
    """
    root = Path(root)
    for sub in ("left", "right", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for name, scene in scenes.items():
        save_image(scene.left, root / "left" / f"{name}.png")
        save_image(scene.right, root / "right" / f"{name}.png")
        save_disparity(scene.gt, root / "gt" / f"{name}.png", "kitti-png16")
