"""Hot per-pixel kernels: sRGB→Lab, CIEDE2000 maps, k-means assignment.

Each kernel exists twice: a numba ``@njit`` loop and a pure-numpy fallback.
The active backend is chosen once at import from the ``UNFILTER_BACKEND``
environment variable ("numba" or "numpy", default numba when importable);
``set_backend`` flips it at runtime for tests and benchmarks. Both paths
must agree to float precision — ``tests/test_kernels.py`` holds them to it,
and ``benchmarks/bench_kernels.py`` compares their speed.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import ConfigError

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap if not (args and callable(args[0])) else args[0]


_ENV_VAR = "UNFILTER_BACKEND"
_backend = "numpy"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ConfigError(f"backend must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise ConfigError("numba backend requested but numba is not importable")
    _backend = name


def backend() -> str:
    return _backend


set_backend(os.environ.get(_ENV_VAR, "numba" if HAS_NUMBA else "numpy"))


# ---------------------------------------------------------------------------
# sRGB <-> CIE Lab (D65, 2 degree observer)

_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_SRGB = np.linalg.inv(_SRGB_TO_XYZ)
_WHITE = np.array([0.95047, 1.0, 1.08883])
_EPS = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0


def srgb_to_lab_numpy(rgb: np.ndarray) -> np.ndarray:
    """Map float sRGB values in [0,1], shape (..., 3), to Lab float64."""
    v = np.asarray(rgb, dtype=np.float64)
    lin = np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T / _WHITE
    f = np.where(xyz > _EPS, np.cbrt(xyz), (_KAPPA * xyz + 16.0) / 116.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_srgb(lab: np.ndarray) -> np.ndarray:
    """Inverse of srgb_to_lab; out-of-gamut results are clipped to [0,1]."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    f3 = f**3
    xyz = np.where(f3 > _EPS, f3, (116.0 * f - 16.0) / _KAPPA) * _WHITE
    lin = xyz @ _XYZ_TO_SRGB.T
    lin = np.clip(lin, 0.0, None)
    v = np.where(lin <= 0.0031308, lin * 12.92, 1.055 * lin ** (1.0 / 2.4) - 0.055)
    return np.clip(v, 0.0, 1.0)


@njit(cache=True)
def _srgb_to_lab_kernel(flat, out):  # pragma: no cover - exercised via dispatch
    n = flat.shape[0]
    for i in range(n):
        lin = np.empty(3)
        for c in range(3):
            v = flat[i, c]
            if v <= 0.04045:
                lin[c] = v / 12.92
            else:
                lin[c] = ((v + 0.055) / 1.055) ** 2.4
        x = (0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2]) / 0.95047
        y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2]
        z = (0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2]) / 1.08883
        eps = 216.0 / 24389.0
        kappa = 24389.0 / 27.0
        fx = x ** (1.0 / 3.0) if x > eps else (kappa * x + 16.0) / 116.0
        fy = y ** (1.0 / 3.0) if y > eps else (kappa * y + 16.0) / 116.0
        fz = z ** (1.0 / 3.0) if z > eps else (kappa * z + 16.0) / 116.0
        out[i, 0] = 116.0 * fy - 16.0
        out[i, 1] = 500.0 * (fx - fy)
        out[i, 2] = 200.0 * (fy - fz)


def srgb_to_lab_numba(rgb: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(rgb, dtype=np.float64)
    flat = arr.reshape(-1, 3)
    out = np.empty_like(flat)
    _srgb_to_lab_kernel(flat, out)
    return out.reshape(arr.shape)


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    if _backend == "numba":
        return srgb_to_lab_numba(rgb)
    return srgb_to_lab_numpy(rgb)


# ---------------------------------------------------------------------------
# CIEDE2000 (kL = kC = kH = 1)

_POW7_25 = 25.0**7


def ciede2000_map_numpy(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    """Elementwise CIEDE2000 over (..., 3) Lab arrays; returns shape (...)."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    C1 = np.hypot(a1, b1)
    C2 = np.hypot(a2, b2)
    Cbar = 0.5 * (C1 + C2)
    c7 = Cbar**7
    G = 0.5 * (1.0 - np.sqrt(c7 / (c7 + _POW7_25)))
    a1p = (1.0 + G) * a1
    a2p = (1.0 + G) * a2
    C1p = np.hypot(a1p, b1)
    C2p = np.hypot(a2p, b2)

    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0

    dL = L2 - L1
    dC = C2p - C1p
    prod = C1p * C2p
    hdiff = h2p - h1p
    dh = np.where(
        prod == 0.0,
        0.0,
        np.where(
            np.abs(hdiff) <= 180.0, hdiff, np.where(hdiff > 180.0, hdiff - 360.0, hdiff + 360.0)
        ),
    )
    dH = 2.0 * np.sqrt(prod) * np.sin(np.radians(dh) / 2.0)

    Lbar = 0.5 * (L1 + L2)
    Cbarp = 0.5 * (C1p + C2p)
    hsum = h1p + h2p
    hbar = np.where(
        prod == 0.0,
        hsum,
        np.where(
            np.abs(h1p - h2p) <= 180.0,
            0.5 * hsum,
            np.where(hsum < 360.0, 0.5 * (hsum + 360.0), 0.5 * (hsum - 360.0)),
        ),
    )

    T = (
        1.0
        - 0.17 * np.cos(np.radians(hbar - 30.0))
        + 0.24 * np.cos(np.radians(2.0 * hbar))
        + 0.32 * np.cos(np.radians(3.0 * hbar + 6.0))
        - 0.20 * np.cos(np.radians(4.0 * hbar - 63.0))
    )
    dtheta = 30.0 * np.exp(-(((hbar - 275.0) / 25.0) ** 2))
    cp7 = Cbarp**7
    RC = 2.0 * np.sqrt(cp7 / (cp7 + _POW7_25))
    Lm50 = (Lbar - 50.0) ** 2
    SL = 1.0 + 0.015 * Lm50 / np.sqrt(20.0 + Lm50)
    SC = 1.0 + 0.045 * Cbarp
    SH = 1.0 + 0.015 * Cbarp * T
    RT = -np.sin(np.radians(2.0 * dtheta)) * RC

    tL = dL / SL
    tC = dC / SC
    tH = dH / SH
    return np.sqrt(np.maximum(tL * tL + tC * tC + tH * tH + RT * tC * tH, 0.0))


@njit(cache=True)
def _ciede2000_kernel(f1, f2, out):  # pragma: no cover - exercised via dispatch
    pow7_25 = 25.0**7
    n = f1.shape[0]
    for i in range(n):
        L1, a1, b1 = f1[i, 0], f1[i, 1], f1[i, 2]
        L2, a2, b2 = f2[i, 0], f2[i, 1], f2[i, 2]
        C1 = math.hypot(a1, b1)
        C2 = math.hypot(a2, b2)
        Cbar = 0.5 * (C1 + C2)
        c7 = Cbar**7
        G = 0.5 * (1.0 - math.sqrt(c7 / (c7 + pow7_25)))
        a1p = (1.0 + G) * a1
        a2p = (1.0 + G) * a2
        C1p = math.hypot(a1p, b1)
        C2p = math.hypot(a2p, b2)
        h1p = math.degrees(math.atan2(b1, a1p)) % 360.0
        h2p = math.degrees(math.atan2(b2, a2p)) % 360.0

        dL = L2 - L1
        dC = C2p - C1p
        prod = C1p * C2p
        hdiff = h2p - h1p
        if prod == 0.0:
            dh = 0.0
        elif abs(hdiff) <= 180.0:
            dh = hdiff
        elif hdiff > 180.0:
            dh = hdiff - 360.0
        else:
            dh = hdiff + 360.0
        dH = 2.0 * math.sqrt(prod) * math.sin(math.radians(dh) / 2.0)

        Lbar = 0.5 * (L1 + L2)
        Cbarp = 0.5 * (C1p + C2p)
        hsum = h1p + h2p
        if prod == 0.0:
            hbar = hsum
        elif abs(h1p - h2p) <= 180.0:
            hbar = 0.5 * hsum
        elif hsum < 360.0:
            hbar = 0.5 * (hsum + 360.0)
        else:
            hbar = 0.5 * (hsum - 360.0)

        T = (
            1.0
            - 0.17 * math.cos(math.radians(hbar - 30.0))
            + 0.24 * math.cos(math.radians(2.0 * hbar))
            + 0.32 * math.cos(math.radians(3.0 * hbar + 6.0))
            - 0.20 * math.cos(math.radians(4.0 * hbar - 63.0))
        )
        dtheta = 30.0 * math.exp(-(((hbar - 275.0) / 25.0) ** 2))
        cp7 = Cbarp**7
        RC = 2.0 * math.sqrt(cp7 / (cp7 + pow7_25))
        Lm50 = (Lbar - 50.0) ** 2
        SL = 1.0 + 0.015 * Lm50 / math.sqrt(20.0 + Lm50)
        SC = 1.0 + 0.045 * Cbarp
        SH = 1.0 + 0.015 * Cbarp * T
        RT = -math.sin(math.radians(2.0 * dtheta)) * RC

        tL = dL / SL
        tC = dC / SC
        tH = dH / SH
        val = tL * tL + tC * tC + tH * tH + RT * tC * tH
        out[i] = math.sqrt(val) if val > 0.0 else 0.0


def ciede2000_map_numba(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(lab1, dtype=np.float64)
    b = np.ascontiguousarray(lab2, dtype=np.float64)
    flat_a = a.reshape(-1, 3)
    flat_b = b.reshape(-1, 3)
    out = np.empty(flat_a.shape[0])
    _ciede2000_kernel(flat_a, flat_b, out)
    return out.reshape(a.shape[:-1])


def ciede2000_map(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    if np.shape(lab1) != np.shape(lab2):
        raise ValueError(f"shape mismatch: {np.shape(lab1)} vs {np.shape(lab2)}")
    if _backend == "numba":
        return ciede2000_map_numba(lab1, lab2)
    return ciede2000_map_numpy(lab1, lab2)


# ---------------------------------------------------------------------------
# k-means assignment step

def kmeans_assign_numpy(points: np.ndarray, centroids: np.ndarray):
    """Labels and squared distances of each point to its nearest centroid."""
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(points.shape[0]), labels]


@njit(cache=True)
def _kmeans_assign_kernel(points, centroids, labels, best):  # pragma: no cover
    n = points.shape[0]
    k = centroids.shape[0]
    dim = points.shape[1]
    for i in range(n):
        b = np.inf
        bi = 0
        for j in range(k):
            d = 0.0
            for c in range(dim):
                t = points[i, c] - centroids[j, c]
                d += t * t
            if d < b:
                b = d
                bi = j
        labels[i] = bi
        best[i] = b


def kmeans_assign_numba(points: np.ndarray, centroids: np.ndarray):
    p = np.ascontiguousarray(points, dtype=np.float64)
    c = np.ascontiguousarray(centroids, dtype=np.float64)
    labels = np.empty(p.shape[0], dtype=np.int64)
    best = np.empty(p.shape[0])
    _kmeans_assign_kernel(p, c, labels, best)
    return labels, best


def kmeans_assign(points: np.ndarray, centroids: np.ndarray):
    if _backend == "numba":
        return kmeans_assign_numba(points, centroids)
    return kmeans_assign_numpy(points, centroids)


def warmup() -> None:
    """Trigger JIT compilation so timed paths never pay it."""
    if _backend != "numba":
        return
    rgb = np.full((2, 2, 3), 0.5)
    lab = srgb_to_lab(rgb)
    ciede2000_map(lab, lab)
    kmeans_assign(lab.reshape(-1, 3), lab.reshape(-1, 3)[:1])
