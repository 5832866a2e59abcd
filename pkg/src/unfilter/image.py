"""In-memory RGB raster type plus the PNG/resize plumbing shared by all stages.

Two color-space tags exist: ``srgb_unit`` (values in [0, 1], the space filters
and metrics operate in) and ``generator_signed`` (values in [-1, 1], the
space the generator consumes and produces).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ShapeError, ValidationError

SRGB_UNIT = "srgb_unit"
GENERATOR_SIGNED = "generator_signed"

_RANGES = {SRGB_UNIT: (0.0, 1.0), GENERATOR_SIGNED: (-1.0, 1.0)}

MIN_SIDE = 8


@dataclass
class RgbImage:
    """A decoded H×W×3 float32 raster with a declared value range.

    Pixels are validated (and never silently rescaled) at construction:
    use :meth:`to_signed` / :meth:`to_unit` to move between spaces.
    """

    pixels: np.ndarray
    color_space: str = SRGB_UNIT

    def __post_init__(self) -> None:
        if self.color_space not in _RANGES:
            raise ValidationError(f"unknown color space tag {self.color_space!r}")
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeError(f"expected H×W×3 pixels, got shape {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ShapeError(
                f"image must be at least {MIN_SIDE}×{MIN_SIDE}, got {px.shape[0]}×{px.shape[1]}"
            )
        if not np.all(np.isfinite(px)):
            raise ValidationError("pixels contain non-finite values")
        lo, hi = _RANGES[self.color_space]
        if px.min() < lo - 1e-6 or px.max() > hi + 1e-6:
            raise ValidationError(
                f"pixels outside [{lo}, {hi}] for color space {self.color_space!r}"
            )
        self.pixels = np.clip(px, lo, hi)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def copy(self) -> "RgbImage":
        return RgbImage(self.pixels.copy(), self.color_space)

    def to_signed(self) -> "RgbImage":
        if self.color_space == GENERATOR_SIGNED:
            return self.copy()
        return RgbImage(self.pixels * 2.0 - 1.0, GENERATOR_SIGNED)

    def to_unit(self) -> "RgbImage":
        if self.color_space == SRGB_UNIT:
            return self.copy()
        return RgbImage((self.pixels + 1.0) * 0.5, SRGB_UNIT)

    def resized(self, height: int, width: int) -> "RgbImage":
        return RgbImage(resize_bilinear(self.pixels, height, width), self.color_space)


def clamp_unit(pixels: np.ndarray) -> np.ndarray:
    return np.clip(pixels, 0.0, 1.0)


def resize_bilinear(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers (align_corners=False).

    Implemented here rather than via an imaging library so dataset synthesis
    stays byte-reproducible regardless of installed library versions.
    """
    src = np.asarray(pixels, dtype=np.float32)
    h, w = src.shape[:2]
    if (h, w) == (height, width):
        return src.copy()
    ys = (np.arange(height, dtype=np.float64) + 0.5) * (h / height) - 0.5
    xs = (np.arange(width, dtype=np.float64) + 0.5) * (w / width) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0).astype(np.float32)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0).astype(np.float32)[None, :, None]
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def load_image(path: str | Path) -> RgbImage:
    """Decode an image file into srgb_unit floats.

    Raises ValidationError for undecodable files so callers can skip them.
    """
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ValidationError(f"cannot decode image {path}: {exc}") from exc
    return RgbImage(arr, SRGB_UNIT)


def save_png(img: RgbImage, path: str | Path) -> None:
    """Write an 8-bit PNG. Rounds half away from zero, deterministically."""
    unit = img.to_unit().pixels
    data = np.clip(np.floor(unit * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data, "RGB").save(path, format="PNG")


def from_u8(data: np.ndarray) -> RgbImage:
    return RgbImage(np.asarray(data, dtype=np.float32) / 255.0, SRGB_UNIT)
