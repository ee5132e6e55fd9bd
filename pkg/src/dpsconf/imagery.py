"""Raster containers and dataset file formats.

Images are 8-bit grayscale or RGB arrays. Disparity maps carry a float32
value grid plus a boolean validity mask; invalid entries are never used by
downstream arithmetic. Supported disparity encodings are the KITTI 16-bit
PNG convention (value / 256, 0 = invalid) and PFM.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = [
    "ImageryError",
    "MissingFileError",
    "UnsupportedFormatError",
    "CorruptStreamError",
    "FormatMismatchError",
    "DimensionOverflowError",
    "OutOfRangeError",
    "RasterImage",
    "Raster",
    "DisparityMap",
    "ConfidenceMap",
    "DISPARITY_FORMATS",
    "load_image",
    "save_image",
    "load_disparity",
    "save_disparity",
    "read_pfm",
    "write_pfm",
    "save_gray_visualization",
]

DISPARITY_FORMATS = ("kitti-png16", "pfm")

# Largest side accepted from a file header; guards against absurd allocations.
MAX_DIMENSION = 1 << 16


class ImageryError(Exception):
    """Base class for every load/save failure in this module."""


class MissingFileError(ImageryError, FileNotFoundError):
    pass


class UnsupportedFormatError(ImageryError):
    pass


class CorruptStreamError(ImageryError):
    pass


class FormatMismatchError(ImageryError):
    pass


class DimensionOverflowError(ImageryError):
    pass


class OutOfRangeError(ImageryError, ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RasterImage:
    """8-bit image of shape (H, W) or (H, W, 3)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise ValueError("image samples must fit in 8 bits")
            data = data.astype(np.uint8)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
            raise ValueError(f"expected (H, W) or (H, W, 3) samples, got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def gray(self) -> np.ndarray:
        """Integer luma (299R + 587G + 114B) / 1000, as float64."""
        if self.channels == 1:
            return self.data.astype(np.float64)
        rgb = self.data.astype(np.int64)
        luma = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2]) / 1000.0
        return luma


@dataclass(frozen=True)
class Raster:
    """Real-valued grid with a validity mask.

    Values at invalid positions are unspecified; consumers must mask.
    """

    values: np.ndarray
    valid: np.ndarray = field(default=None)

    _dtype = np.float64

    def __post_init__(self):
        values = np.asarray(self.values, dtype=self._dtype)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D grid, got shape {values.shape}")
        if self.valid is None:
            valid = np.isfinite(values)
        else:
            valid = np.asarray(self.valid, dtype=bool)
        if valid.shape != values.shape:
            raise ValueError(f"mask shape {valid.shape} does not match values {values.shape}")
        if not np.all(np.isfinite(values[valid])):
            raise ValueError("valid entries must be finite")
        self._check(values, valid)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    def _check(self, values, valid):
        pass

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def masked(self, fill: float = np.nan) -> np.ndarray:
        """Copy of the values with invalid entries replaced by ``fill``."""
        out = np.array(self.values, dtype=np.float64)
        out[~self.valid] = fill
        return out


class DisparityMap(Raster):
    """Disparities in pixels, stored as float32 so PFM round-trips are exact."""

    _dtype = np.float32


class ConfidenceMap(Raster):
    def _check(self, values, valid):
        v = values[valid]
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("confidence values must lie in [0, 1]")


def _require_file(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    return path


def load_image(path) -> RasterImage:
    """Decode an 8-bit grayscale or RGB PNG/PGM/PPM file."""
    path = _require_file(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "RGB"):
                data = np.array(im)
            elif mode == "P":
                data = np.array(im.convert("RGB"))
            elif mode == "1":
                data = np.array(im.convert("L"))
            else:
                raise UnsupportedFormatError(f"{path}: unsupported pixel mode {mode!r} (need 8-bit gray or RGB)")
    except UnidentifiedImageError as exc:
        raise CorruptStreamError(f"{path}: not a decodable image") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, ImageryError):
            raise
        raise CorruptStreamError(f"{path}: {exc}") from exc
    return RasterImage(data)


def save_image(image: RasterImage, path) -> None:
    """Write an image as PNG, or PGM/PPM when the suffix asks for it."""
    path = Path(path)
    fmt = {".pgm": "PPM", ".ppm": "PPM", ".pnm": "PPM"}.get(path.suffix.lower(), "PNG")
    Image.fromarray(np.asarray(image.data)).save(path, format=fmt)


def read_pfm(path) -> np.ndarray:
    """Read a single-channel PFM into a top-to-bottom float32 array."""
    path = _require_file(path)
    with open(path, "rb") as fh:
        header = fh.readline().rstrip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise FormatMismatchError(f"{path}: not a PFM file (header {header[:8]!r})")
        dims = fh.readline()
        while dims.startswith(b"#"):
            dims = fh.readline()
        m = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise CorruptStreamError(f"{path}: malformed PFM dimensions line")
        width, height = int(m.group(1)), int(m.group(2))
        if width < 1 or height < 1 or width > MAX_DIMENSION or height > MAX_DIMENSION:
            raise DimensionOverflowError(f"{path}: PFM dimensions {width}x{height} out of range")
        try:
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise CorruptStreamError(f"{path}: malformed PFM scale line") from exc
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        raw = fh.read(count * 4)
    if len(raw) != count * 4:
        raise CorruptStreamError(f"{path}: PFM payload truncated ({len(raw)} of {count * 4} bytes)")
    data = np.frombuffer(raw, dtype=endian + "f4").astype(np.float32)
    data = data.reshape(height, width, channels)[:, :, 0]
    return np.flipud(data).copy()


def write_pfm(path, values: np.ndarray) -> None:
    """Write a 2-D array as little-endian single-channel PFM."""
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError("PFM writer expects a 2-D array")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(b"%d %d\n" % (values.shape[1], values.shape[0]))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(values).tobytes())


def _read_png16(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if im.format != "PNG":
                raise FormatMismatchError(f"{path}: expected a PNG, found {im.format}")
            if im.mode not in ("I;16", "I;16B", "I"):
                raise FormatMismatchError(f"{path}: expected 16-bit grayscale PNG, found mode {im.mode!r}")
            data = np.array(im)
    except UnidentifiedImageError as exc:
        raise FormatMismatchError(f"{path}: not a PNG file") from exc
    except OSError as exc:
        raise CorruptStreamError(f"{path}: {exc}") from exc
    if data.min(initial=0) < 0 or data.max(initial=0) > 65535:
        raise FormatMismatchError(f"{path}: samples exceed 16 bits")
    return data.astype(np.uint16)


def load_disparity(path, format: str, d_max: float | None = None) -> DisparityMap:
    """Load a disparity map.

    ``kitti-png16`` decodes v/256 with v == 0 invalid. ``pfm`` keeps values
    verbatim and marks non-finite or negative entries invalid. When ``d_max``
    is given, disparities above it are marked invalid as well.
    """
    path = _require_file(path)
    if format == "kitti-png16":
        raw = _read_png16(path)
        valid = raw > 0
        values = raw.astype(np.float32) / np.float32(256.0)
    elif format == "pfm":
        values = read_pfm(path)
        valid = np.isfinite(values) & (values >= 0)
    else:
        raise ValueError(f"unknown disparity format {format!r}; expected one of {DISPARITY_FORMATS}")
    if d_max is not None:
        valid &= ~(values > d_max)
    values = np.where(valid, values, np.float32(0.0))
    return DisparityMap(values, valid)


def save_disparity(disp: DisparityMap, path, format: str) -> None:
    path = Path(path)
    v = disp.values[disp.valid]
    if format == "kitti-png16":
        if v.size and (v.min() <= 0.0 or v.max() >= 256.0):
            raise OutOfRangeError("kitti-png16 stores disparities in (0, 256) only")
        enc = np.zeros(disp.shape, dtype=np.uint16)
        scaled = np.rint(disp.values.astype(np.float64) * 256.0)
        enc[disp.valid] = np.clip(scaled[disp.valid], 1, 65535).astype(np.uint16)
        Image.fromarray(enc).save(path, format="PNG")
    elif format == "pfm":
        if v.size and v.min() < 0.0:
            raise OutOfRangeError("negative disparities would read back as invalid")
        out = np.where(disp.valid, disp.values, np.float32(np.inf))
        write_pfm(path, out)
    else:
        raise ValueError(f"unknown disparity format {format!r}; expected one of {DISPARITY_FORMATS}")


def save_gray_visualization(raster: Raster, path, scale: float) -> None:
    """Write clamp(round(value * scale), 0, 255) as 8-bit PNG; invalid pixels are 0.

    Rounding is half away from zero.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    x = raster.values.astype(np.float64) * scale
    x = np.sign(x) * np.floor(np.abs(x) + 0.5)
    out = np.clip(x, 0, 255).astype(np.uint8)
    out[~raster.valid] = 0
    try:
        Image.fromarray(out).save(Path(path), format="PNG")
    except OSError as exc:
        raise ImageryError(f"cannot write {path}: {exc}") from exc
