import numpy as np
import pytest

from unfilter.image import RgbImage


def make_varied_photo(seed, size=96):
    """Photo-like image with randomized color fields and shapes; used to
    build training corpora where image diversity matters."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / (size - 1)
    img = np.zeros((size, size, 3), dtype=np.float32)
    for c in range(3):
        coef = rng.uniform(-0.5, 0.5, size=6)
        img[..., c] = (
            0.5
            + coef[0] * xx + coef[1] * yy
            + coef[2] * np.sin(2 * np.pi * (coef[3] + 1.2) * xx * 0.5)
            + coef[4] * np.cos(2 * np.pi * (coef[5] + 1.2) * yy * 0.5)
        )
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0.15, 0.85, 2)
        r = rng.uniform(0.08, 0.25)
        color = rng.uniform(0.1, 0.9, 3).astype(np.float32)
        img[((yy - cy) ** 2 + (xx - cx) ** 2) < r * r] = color
    for _ in range(rng.integers(1, 3)):
        y0, x0 = rng.uniform(0.0, 0.7, 2)
        h, w = rng.uniform(0.1, 0.3, 2)
        color = rng.uniform(0.1, 0.9, 3).astype(np.float32)
        img[(yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)] = color
    img += rng.normal(0, 0.015, img.shape).astype(np.float32)
    return RgbImage(np.clip(img, 0, 1))


def make_photo(height=64, width=64, seed=0):
    """Deterministic photo-like test image: gradients, a disc, soft noise."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    yy /= height - 1
    xx /= width - 1
    r = 0.25 + 0.5 * xx + 0.15 * np.sin(3.0 * yy)
    g = 0.35 + 0.4 * yy
    b = 0.3 + 0.3 * (1.0 - xx) + 0.1 * np.cos(5.0 * xx)
    img = np.stack([r, g, b], axis=-1)
    cy, cx = height * 0.4, width * 0.6
    disc = ((np.mgrid[0:height, 0:width][0] - cy) ** 2 + (np.mgrid[0:height, 0:width][1] - cx) ** 2) < (min(height, width) * 0.2) ** 2
    img[disc] = [0.8, 0.45, 0.3]
    img += rng.normal(0, 0.01, img.shape).astype(np.float32)
    return RgbImage(np.clip(img, 0.0, 1.0))


@pytest.fixture
def photo():
    return make_photo()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
