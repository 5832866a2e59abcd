"""Image similarity metrics: SSIM, PSNR, and CIEDE2000 color difference.

Reference configuration (documented, not tunable): SSIM uses an 11×11
Gaussian window with sigma 1.5, K1=0.01, K2=0.03, dynamic range 1.0,
computed on BT.601 luma over fully-valid windows. PSNR uses range 1.0 and
reports 99 dB for identical images instead of infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from . import kernels
from .errors import ShapeError
from .image import RgbImage

PSNR_CAP_DB = 99.0

_K1 = 0.01
_K2 = 0.03
_WINDOW = 11
_SIGMA = 1.5
_LUMA601 = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class LabColor:
    """CIE Lab coordinates (D65, 2 degree observer, sRGB-derived)."""

    L: float
    a: float
    b: float

    def as_array(self) -> np.ndarray:
        return np.array([self.L, self.a, self.b], dtype=np.float64)

    @classmethod
    def from_srgb(cls, rgb) -> "LabColor":
        lab = kernels.srgb_to_lab(np.asarray(rgb, dtype=np.float64))
        return cls(float(lab[0]), float(lab[1]), float(lab[2]))

    def to_srgb(self) -> np.ndarray:
        return kernels.lab_to_srgb(self.as_array())


def _luma(img: RgbImage) -> np.ndarray:
    return img.to_unit().pixels.astype(np.float64) @ _LUMA601


def _gaussian_window() -> np.ndarray:
    r = _WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(x**2) / (2.0 * _SIGMA**2))
    return w / w.sum()


def _check_shapes(a: RgbImage, b: RgbImage) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")


def ssim(a: RgbImage, b: RgbImage) -> float:
    """Mean structural similarity over all fully-covered windows."""
    _check_shapes(a, b)
    if min(a.height, a.width) < _WINDOW:
        raise ShapeError(f"ssim needs images of at least {_WINDOW}×{_WINDOW}")
    x = _luma(a)
    y = _luma(b)
    w = _gaussian_window()
    r = _WINDOW // 2

    def smooth(z: np.ndarray) -> np.ndarray:
        z = correlate1d(z, w, axis=0, mode="constant")
        z = correlate1d(z, w, axis=1, mode="constant")
        return z[r:-r, r:-r]

    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x * mu_x
    var_y = smooth(y * y) - mu_y * mu_y
    cov = smooth(x * y) - mu_x * mu_y
    c1 = _K1 * _K1
    c2 = _K2 * _K2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def psnr(a: RgbImage, b: RgbImage) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range."""
    _check_shapes(a, b)
    diff = a.to_unit().pixels.astype(np.float64) - b.to_unit().pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def ciede2000(c1: LabColor, c2: LabColor) -> float:
    """CIEDE2000 color difference with kL = kC = kH = 1."""
    value = kernels.ciede2000_map(
        c1.as_array().reshape(1, 3), c2.as_array().reshape(1, 3)
    )
    return float(value[0])


def image_delta_e(a: RgbImage, b: RgbImage) -> float:
    """Mean per-pixel CIEDE2000 after sRGB→Lab conversion."""
    _check_shapes(a, b)
    lab_a = kernels.srgb_to_lab(a.to_unit().pixels)
    lab_b = kernels.srgb_to_lab(b.to_unit().pixels)
    return float(np.mean(kernels.ciede2000_map(lab_a, lab_b)))
