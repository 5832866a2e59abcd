"""Parametric image primitives and named filter recipes.

A filter is an ordered list of primitives (brightness, curves, vignette, ...)
applied in srgb_unit space with clamping after every step. The sixteen
built-in recipes live in ``data/filters.json`` and are frozen: editing them
changes dataset bytes, so the registry file carries a version number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from importlib import resources
from typing import ClassVar

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import UnknownNameError, ValidationError
from .image import RgbImage, SRGB_UNIT, clamp_unit

# ITU-R BT.601 luma weights, used for saturation and grain.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def _check_unit(name: str, value: float, lo: float = 0.0, hi: float = 1.0) -> None:
    if not (lo <= value <= hi):
        raise ValidationError(f"{name} must be in [{lo}, {hi}], got {value}")


@dataclass(frozen=True)
class Primitive:
    """Base class; subclasses implement ``apply`` on H×W×3 floats in [0,1]."""

    kind: ClassVar[str] = ""

    def apply(self, px: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update({f.name: getattr(self, f.name) for f in fields(self)})
        return d


@dataclass(frozen=True)
class Brightness(Primitive):
    kind: ClassVar[str] = "brightness"
    delta: float = 0.0

    def apply(self, px: np.ndarray) -> np.ndarray:
        return px + np.float32(self.delta)


@dataclass(frozen=True)
class Contrast(Primitive):
    """Linear contrast around a pivot; gain 1 is the identity."""

    kind: ClassVar[str] = "contrast"
    gain: float = 1.0
    pivot: float = 0.5

    def __post_init__(self) -> None:
        if self.gain < 0:
            raise ValidationError(f"contrast: gain must be >= 0, got {self.gain}")
        _check_unit("contrast: pivot", self.pivot)

    def apply(self, px: np.ndarray) -> np.ndarray:
        return (px - np.float32(self.pivot)) * np.float32(self.gain) + np.float32(self.pivot)


@dataclass(frozen=True)
class Saturation(Primitive):
    """Blend between BT.601 luma (gain 0) and the original chroma (gain 1)."""

    kind: ClassVar[str] = "saturation"
    gain: float = 1.0

    def __post_init__(self) -> None:
        if self.gain < 0:
            raise ValidationError(f"saturation: gain must be >= 0, got {self.gain}")

    def apply(self, px: np.ndarray) -> np.ndarray:
        luma = px @ _LUMA
        return luma[..., None] + (px - luma[..., None]) * np.float32(self.gain)


@dataclass(frozen=True)
class HueRotate(Primitive):
    """Rotate hues by the given angle using the linear-RGB rotation matrix
    (same construction as SVG's hueRotate); 0 and 360 degrees are identities.
    """

    kind: ClassVar[str] = "hue_rotate"
    degrees: float = 0.0

    def apply(self, px: np.ndarray) -> np.ndarray:
        t = np.radians(self.degrees)
        c, s = np.cos(t), np.sin(t)
        m = np.array(
            [
                [0.213 + 0.787 * c - 0.213 * s, 0.715 - 0.715 * c - 0.715 * s, 0.072 - 0.072 * c + 0.928 * s],
                [0.213 - 0.213 * c + 0.143 * s, 0.715 + 0.285 * c + 0.140 * s, 0.072 - 0.072 * c - 0.283 * s],
                [0.213 - 0.213 * c - 0.787 * s, 0.715 - 0.715 * c + 0.715 * s, 0.072 + 0.928 * c + 0.072 * s],
            ],
            dtype=np.float32,
        )
        return px @ m.T


@dataclass(frozen=True)
class ChannelCurve(Primitive):
    """Monotone piecewise-linear tone curve on one channel (or all three).

    Control points are (in, out) pairs; the in coordinates must be strictly
    increasing with endpoints at exactly 0 and 1.
    """

    kind: ClassVar[str] = "channel_curve"
    channel: str = "all"
    control_points: tuple = ()

    def __post_init__(self) -> None:
        if self.channel not in ("r", "g", "b", "all"):
            raise ValidationError(
                f"channel_curve: channel must be r, g, b or all, got {self.channel!r}"
            )
        pts = tuple((float(a), float(b)) for a, b in self.control_points)
        object.__setattr__(self, "control_points", pts)
        if len(pts) < 2:
            raise ValidationError("channel_curve: need at least two control points")
        xs = [p[0] for p in pts]
        if xs[0] != 0.0 or xs[-1] != 1.0:
            raise ValidationError(
                f"channel_curve: control points must span [0, 1], got endpoints {xs[0]}..{xs[-1]}"
            )
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValidationError(
                f"channel_curve: `in` coordinates must be strictly increasing, got {xs}"
            )
        for _, y in pts:
            _check_unit("channel_curve: out value", y)

    def apply(self, px: np.ndarray) -> np.ndarray:
        xs = np.array([p[0] for p in self.control_points], dtype=np.float32)
        ys = np.array([p[1] for p in self.control_points], dtype=np.float32)
        if self.channel == "all":
            return np.interp(px, xs, ys).astype(np.float32)
        idx = "rgb".index(self.channel)
        out = px.copy()
        out[..., idx] = np.interp(px[..., idx], xs, ys).astype(np.float32)
        return out


@dataclass(frozen=True)
class Tint(Primitive):
    """Blend the whole image toward a constant color."""

    kind: ClassVar[str] = "tint"
    rgb: tuple = (1.0, 1.0, 1.0)
    opacity: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "rgb", tuple(float(v) for v in self.rgb))
        _check_unit("tint: opacity", self.opacity)
        for v in self.rgb:
            _check_unit("tint: rgb component", v)

    def apply(self, px: np.ndarray) -> np.ndarray:
        color = np.array(self.rgb, dtype=np.float32)
        return px * np.float32(1.0 - self.opacity) + color * np.float32(self.opacity)


@dataclass(frozen=True)
class Vignette(Primitive):
    """Darken toward the corners. Radius is normalized so 1.0 is the corner
    distance; pixels inside ``inner_radius`` are untouched and the falloff
    to the corners is quadratic, scaled by ``strength``.
    """

    kind: ClassVar[str] = "vignette"
    strength: float = 0.0
    inner_radius: float = 0.3

    def __post_init__(self) -> None:
        _check_unit("vignette: strength", self.strength)
        _check_unit("vignette: inner_radius", self.inner_radius)

    def apply(self, px: np.ndarray) -> np.ndarray:
        if self.strength == 0.0:
            return px
        h, w = px.shape[:2]
        yy = (np.arange(h, dtype=np.float32) + 0.5) / h * 2.0 - 1.0
        xx = (np.arange(w, dtype=np.float32) + 0.5) / w * 2.0 - 1.0
        r = np.sqrt(yy[:, None] ** 2 + xx[None, :] ** 2) / np.sqrt(2.0)
        t = np.clip((r - self.inner_radius) / max(1.0 - self.inner_radius, 1e-6), 0.0, 1.0)
        factor = 1.0 - np.float32(self.strength) * t * t
        return px * factor[..., None]


@dataclass(frozen=True)
class Grain(Primitive):
    """Additive luminance noise drawn from a seeded PCG64 stream, so the
    result is a pure function of (image, sigma, seed).
    """

    kind: ClassVar[str] = "grain"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValidationError(f"grain: sigma must be >= 0, got {self.sigma}")

    def apply(self, px: np.ndarray) -> np.ndarray:
        if self.sigma == 0.0:
            return px
        rng = np.random.Generator(np.random.PCG64(self.seed))
        noise = rng.normal(0.0, self.sigma, size=px.shape[:2]).astype(np.float32)
        return px + noise[..., None]


@dataclass(frozen=True)
class GaussianBlur(Primitive):
    kind: ClassVar[str] = "gaussian_blur"
    radius_px: float = 0.0

    def __post_init__(self) -> None:
        if self.radius_px < 0:
            raise ValidationError(f"gaussian_blur: radius_px must be >= 0, got {self.radius_px}")

    def apply(self, px: np.ndarray) -> np.ndarray:
        if self.radius_px < 1e-6:
            return px
        return gaussian_filter(
            px, sigma=(self.radius_px, self.radius_px, 0.0), mode="reflect"
        ).astype(np.float32)


_BLEND_MODES = ("screen", "multiply", "softlight")


@dataclass(frozen=True)
class Overlay(Primitive):
    """Blend a constant color layer over the image.

    softlight follows the W3C compositing spec formula.
    """

    kind: ClassVar[str] = "overlay"
    rgb: tuple = (1.0, 1.0, 1.0)
    blend_mode: str = "screen"
    opacity: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "rgb", tuple(float(v) for v in self.rgb))
        if self.blend_mode not in _BLEND_MODES:
            raise ValidationError(
                f"overlay: blend_mode must be one of {_BLEND_MODES}, got {self.blend_mode!r}"
            )
        _check_unit("overlay: opacity", self.opacity)
        for v in self.rgb:
            _check_unit("overlay: rgb component", v)

    def apply(self, px: np.ndarray) -> np.ndarray:
        b = np.array(self.rgb, dtype=np.float32)
        a = px
        if self.blend_mode == "screen":
            blended = 1.0 - (1.0 - a) * (1.0 - b)
        elif self.blend_mode == "multiply":
            blended = a * b
        else:  # softlight
            d = np.where(a <= 0.25, ((16.0 * a - 12.0) * a + 4.0) * a, np.sqrt(np.maximum(a, 0.0)))
            blended = np.where(
                b <= 0.5,
                a - (1.0 - 2.0 * b) * a * (1.0 - a),
                a + (2.0 * b - 1.0) * (d - a),
            )
        return a * np.float32(1.0 - self.opacity) + blended.astype(np.float32) * np.float32(self.opacity)


PRIMITIVE_KINDS: dict[str, type[Primitive]] = {
    cls.kind: cls
    for cls in (
        Brightness,
        Contrast,
        Saturation,
        HueRotate,
        ChannelCurve,
        Tint,
        Vignette,
        Grain,
        GaussianBlur,
        Overlay,
    )
}


def primitive_from_dict(data: dict) -> Primitive:
    data = dict(data)
    kind = data.pop("kind", None)
    cls = PRIMITIVE_KINDS.get(kind)
    if cls is None:
        raise ValidationError(
            f"unknown primitive kind {kind!r}; known kinds: {sorted(PRIMITIVE_KINDS)}"
        )
    try:
        if "control_points" in data:
            data["control_points"] = tuple(tuple(p) for p in data["control_points"])
        if "rgb" in data:
            data["rgb"] = tuple(data["rgb"])
        return cls(**data)
    except TypeError as exc:
        raise ValidationError(f"{kind}: bad parameters: {exc}") from exc


@dataclass(frozen=True)
class FilterSpec:
    """A named, ordered primitive list. The name "original" means no-op."""

    name: str
    primitives: tuple = ()

    def __post_init__(self) -> None:
        prims = tuple(self.primitives)
        object.__setattr__(self, "primitives", prims)
        for p in prims:
            if not isinstance(p, Primitive):
                raise ValidationError(f"filter {self.name!r}: {p!r} is not a primitive")
        if (self.name == ORIGINAL) != (len(prims) == 0):
            raise ValidationError(
                'the filter named "original" must have an empty primitive list, '
                "and only that filter may be empty"
            )

    def reseeded(self, seed: int) -> "FilterSpec":
        """Copy of this spec with every grain primitive reseeded."""
        prims = tuple(
            replace(p, seed=int(seed)) if isinstance(p, Grain) else p for p in self.primitives
        )
        return FilterSpec(self.name, prims)

    def to_dict(self) -> dict:
        return {"name": self.name, "primitives": [p.to_dict() for p in self.primitives]}


ORIGINAL = "original"

# The sixteen built-in filter names, in registry (= class index) order.
FILTER_NAMES: tuple[str, ...] = (
    "1977",
    "Amaro",
    "Brannan",
    "Clarendon",
    "Gingham",
    "He-Fe",
    "Hudson",
    "Lo-Fi",
    "Mayfair",
    "Nashville",
    "Perpetua",
    "Sutro",
    "Toaster",
    "Valencia",
    "Willow",
    "X-Pro II",
)

# Classifier vocabulary: the sixteen filters plus "original" as the last class.
CLASS_NAMES: tuple[str, ...] = FILTER_NAMES + (ORIGINAL,)

_REGISTRY: dict[str, FilterSpec] | None = None
_REGISTRY_VERSION: int | None = None


def _load_registry() -> dict[str, FilterSpec]:
    global _REGISTRY, _REGISTRY_VERSION
    if _REGISTRY is None:
        text = resources.files("unfilter").joinpath("data/filters.json").read_text()
        raw = json.loads(text)
        _REGISTRY_VERSION = raw["version"]
        specs = {}
        for name, prims in raw["filters"].items():
            specs[name] = FilterSpec(name, tuple(primitive_from_dict(p) for p in prims))
        missing = set(FILTER_NAMES) - set(specs)
        if missing:
            raise ValidationError(f"registry file is missing filters: {sorted(missing)}")
        _REGISTRY = specs
    return _REGISTRY


def registry_version() -> int:
    _load_registry()
    assert _REGISTRY_VERSION is not None
    return _REGISTRY_VERSION


def builtin_filter(name: str) -> FilterSpec:
    """Look up one of the sixteen built-in filters (or "original")."""
    if name == ORIGINAL:
        return FilterSpec(ORIGINAL, ())
    registry = _load_registry()
    if name not in registry:
        raise UnknownNameError(
            f"unknown filter {name!r}; valid names: {', '.join(FILTER_NAMES)} (or '{ORIGINAL}')"
        )
    return registry[name]


def apply_primitive(img: RgbImage, prim: Primitive) -> RgbImage:
    """Apply one primitive in srgb_unit space, clamping the result."""
    if img.color_space != SRGB_UNIT:
        raise ValidationError("primitives operate on srgb_unit images")
    return RgbImage(clamp_unit(prim.apply(img.pixels)), SRGB_UNIT)


def apply_filter(img: RgbImage, spec: FilterSpec) -> RgbImage:
    """Apply a filter's primitives in declared order; "original" copies."""
    out = img.to_unit()
    for prim in spec.primitives:
        out = apply_primitive(out, prim)
    return out
