import numpy as np
import pytest

from unfilter.errors import ShapeError, ValidationError
from unfilter.image import (
    GENERATOR_SIGNED,
    RgbImage,
    load_image,
    resize_bilinear,
    save_png,
)


def test_rejects_wrong_channel_count():
    with pytest.raises(ShapeError):
        RgbImage(np.zeros((16, 16, 4), dtype=np.float32))


def test_rejects_tiny_images():
    with pytest.raises(ShapeError):
        RgbImage(np.zeros((4, 16, 3), dtype=np.float32))


def test_rejects_out_of_range():
    px = np.zeros((16, 16, 3), dtype=np.float32)
    px[0, 0, 0] = 1.5
    with pytest.raises(ValidationError):
        RgbImage(px)
    with pytest.raises(ValidationError):
        RgbImage(px - 2.0, GENERATOR_SIGNED)


def test_rejects_nan():
    px = np.zeros((16, 16, 3), dtype=np.float32)
    px[3, 3, 1] = np.nan
    with pytest.raises(ValidationError):
        RgbImage(px)


def test_signed_unit_roundtrip(photo):
    back = photo.to_signed().to_unit()
    assert np.allclose(back.pixels, photo.pixels, atol=1e-6)
    assert back.color_space == photo.color_space


def test_resize_identity(photo):
    out = resize_bilinear(photo.pixels, photo.height, photo.width)
    assert np.array_equal(out, photo.pixels)


def test_resize_constant_stays_constant():
    px = np.full((16, 24, 3), 0.37, dtype=np.float32)
    out = resize_bilinear(px, 40, 12)
    assert np.allclose(out, 0.37, atol=1e-6)


def test_resize_preserves_linear_ramp_mean():
    ramp = np.linspace(0, 1, 32, dtype=np.float32)
    px = np.repeat(np.tile(ramp, (32, 1))[:, :, None], 3, axis=2)
    out = resize_bilinear(px, 16, 16)
    assert abs(out.mean() - px.mean()) < 0.01


def test_png_roundtrip(tmp_path, photo):
    path = tmp_path / "img.png"
    save_png(photo, path)
    back = load_image(path)
    assert back.pixels.shape == photo.pixels.shape
    assert np.abs(back.pixels - photo.pixels).max() <= 0.5 / 255 + 1e-6


def test_png_bytes_deterministic(tmp_path, photo):
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    save_png(photo, p1)
    save_png(photo, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"this is not an image")
    with pytest.raises(ValidationError):
        load_image(bad)
