"""Dominant-color palettes via k-means in Lab space, and palette matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .errors import ShapeError, ValidationError
from .image import RgbImage
from .metrics import LabColor

KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-4


@dataclass
class Palette:
    """k Lab centroids with population weights, sorted by weight descending."""

    colors: np.ndarray  # (k, 3) Lab
    weights: np.ndarray  # (k,), sums to 1

    def __post_init__(self) -> None:
        self.colors = np.asarray(self.colors, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.colors.ndim != 2 or self.colors.shape[1] != 3:
            raise ShapeError(f"palette colors must be (k, 3), got {self.colors.shape}")
        if self.weights.shape != (self.colors.shape[0],):
            raise ShapeError("palette weights must match color count")
        if abs(float(self.weights.sum()) - 1.0) > 1e-6:
            raise ValidationError("palette weights must sum to 1")
        if np.any(np.diff(self.weights) > 1e-12):
            raise ValidationError("palette weights must be nonincreasing")

    @property
    def k(self) -> int:
        return self.colors.shape[0]

    def entries(self) -> list[tuple[LabColor, float]]:
        return [
            (LabColor(*self.colors[i]), float(self.weights[i])) for i in range(self.k)
        ]

    def srgb_hex(self) -> list[str]:
        rgb = kernels.lab_to_srgb(self.colors)
        out = []
        for r, g, b in np.clip(np.floor(rgb * 255.0 + 0.5), 0, 255).astype(int):
            out.append(f"#{r:02x}{g:02x}{b:02x}")
        return out

    def to_json(self) -> list[dict]:
        return [
            {"lab": [float(v) for v in self.colors[i]], "srgb_hex": self.srgb_hex()[i],
             "weight": float(self.weights[i])}
            for i in range(self.k)
        ]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def lloyd_iterations(
    points: np.ndarray,
    init: np.ndarray,
    max_iter: int = KMEANS_MAX_ITER,
    tol: float = KMEANS_TOL,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Run Lloyd's algorithm; returns (centroids, labels, objective history).

    The history records the within-cluster sum of squares after each
    assignment step, which is nonincreasing for exact arithmetic.
    """
    centroids = np.array(init, dtype=np.float64, copy=True)
    labels = np.zeros(points.shape[0], dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iter):
        labels, best = kernels.kmeans_assign(points, centroids)
        history.append(float(best.sum()))
        new = np.empty_like(centroids)
        for j in range(centroids.shape[0]):
            members = points[labels == j]
            if len(members) == 0:
                # reseed an empty cluster on the point farthest from its centroid
                new[j] = points[int(np.argmax(best))]
            else:
                new[j] = members.mean(axis=0)
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        if shift < tol:
            break
    labels, _ = kernels.kmeans_assign(points, centroids)
    return centroids, labels, history


def _exact_distinct_palette(points: np.ndarray, k: int) -> Palette:
    colors, counts = np.unique(points, axis=0, return_counts=True)
    order = np.lexsort(colors.T[::-1])  # stable tiebreak on color value
    colors, counts = colors[order], counts[order]
    order = np.argsort(-counts, kind="stable")
    colors, counts = colors[order], counts[order]
    weights = counts / counts.sum()
    pad = k - colors.shape[0]
    if pad > 0:
        # documented rule: duplicate the last centroid with zero weight
        colors = np.vstack([colors, np.repeat(colors[-1:], pad, axis=0)])
        weights = np.concatenate([weights, np.zeros(pad)])
    return Palette(colors, weights)


def dominant_colors(img: RgbImage, k: int = 5, seed: int = 0) -> Palette:
    """Extract the k dominant colors of an image by k-means clustering.

    Clustering runs in Lab space with k-means++ initialization drawn from
    ``seed``, at most 300 iterations, stopping when the largest centroid
    shift drops below 1e-4. Weights are cluster population fractions.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    points = kernels.srgb_to_lab(img.to_unit().pixels).reshape(-1, 3)
    distinct = np.unique(points, axis=0)
    if distinct.shape[0] <= k:
        return _exact_distinct_palette(points, k)
    rng = np.random.Generator(np.random.PCG64(seed))
    init = _kmeans_pp_init(points, k, rng)
    centroids, labels, _ = lloyd_iterations(points, init)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    weights = counts / counts.sum()
    order = np.argsort(-weights, kind="stable")
    return Palette(centroids[order], weights[order])


def palette_match_delta(p_test: Palette, p_ref: Palette) -> list[tuple[float, float]]:
    """Minimum-cost assignment between palettes under CIEDE2000 cost.

    Returns (delta_e, weight) pairs ordered by reference weight descending;
    the weight reported is the reference entry's weight.
    """
    if p_test.k != p_ref.k:
        raise ShapeError(f"palette sizes differ: {p_test.k} vs {p_ref.k}")
    k = p_ref.k
    test = np.repeat(p_test.colors[:, None, :], k, axis=1)
    ref = np.repeat(p_ref.colors[None, :, :], k, axis=0)
    cost = kernels.ciede2000_map(test, ref)  # cost[i, j] = dE(test_i, ref_j)
    rows, cols = linear_sum_assignment(cost)
    match = {int(j): int(i) for i, j in zip(rows, cols)}
    return [(float(cost[match[j], j]), float(p_ref.weights[j])) for j in range(k)]


def palette_match_by_weight(p_test: Palette, p_ref: Palette) -> list[tuple[float, float]]:
    """Alternative pairing: match entries in weight order instead of optimally."""
    if p_test.k != p_ref.k:
        raise ShapeError(f"palette sizes differ: {p_test.k} vs {p_ref.k}")
    des = kernels.ciede2000_map(p_test.colors, p_ref.colors)
    return [(float(des[j]), float(p_ref.weights[j])) for j in range(p_ref.k)]
