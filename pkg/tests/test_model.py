import math

import numpy as np
import pytest
import torch

from unfilter.errors import ConfigError, ShapeError, UnknownNameError
from unfilter.model import (
    AffineParams,
    FeatureBackbone,
    GeneratorBundle,
    GeneratorConfig,
    adain,
    build_discriminators,
)


def small_config(**overrides):
    base = dict(
        image_size=32,
        level_channels=(8, 12, 16, 16, 16, 16),
        style_trunk_width=32,
        disc_base_channels=8,
        seed=3,
    )
    base.update(overrides)
    return GeneratorConfig(**base)


@pytest.fixture(scope="module")
def bundle():
    return GeneratorBundle(small_config())


# --- adain -------------------------------------------------------------------


def test_adain_hand_computed_values():
    # spatial values [1,2,3,4]: mean 2.5, population std sqrt(1.25)
    x = torch.tensor([1.0, 2.0, 3.0, 4.0]).view(1, 1, 1, 4)
    y = AffineParams(mean=torch.zeros(1, 1), std=torch.ones(1, 1))
    out = adain(x, y, eps=1e-12).flatten().tolist()
    expected = [-1.3416407865, -0.4472135955, 0.4472135955, 1.3416407865]
    assert out == pytest.approx(expected, abs=1e-6)


def test_adain_self_statistics_identity():
    # run at small eps: the deviation from identity is |x-mu| * eps/(std+eps)
    torch.manual_seed(0)
    for _ in range(10):
        x = torch.randn(2, 3, 6, 6)
        mean = x.mean(dim=(2, 3))
        std = x.var(dim=(2, 3), unbiased=False).sqrt()
        out = adain(x, AffineParams(mean=mean, std=std), eps=1e-8)
        assert (out - x).abs().max().item() < 1e-5


def test_adain_constant_channel_collapses_to_target_mean():
    # 0.5 is exactly representable, so the channel mean is exact and the
    # zero-variance channel lands exactly on the target mean
    x = torch.full((1, 2, 4, 4), 0.5)
    y = AffineParams(mean=torch.tensor([[1.5, -2.0]]), std=torch.tensor([[3.0, 0.5]]))
    out = adain(x, y, eps=1e-5)
    assert out[0, 0] == pytest.approx(1.5, abs=1e-6)
    assert out[0, 1] == pytest.approx(-2.0, abs=1e-6)


def test_adain_moment_contract():
    torch.manual_seed(1)
    x = torch.randn(3, 4, 8, 8)
    y = AffineParams(mean=torch.randn(3, 4), std=torch.rand(3, 4) + 0.5)
    eps = 1e-5
    out = adain(x, y, eps=eps)
    out_mean = out.mean(dim=(2, 3))
    out_std = out.var(dim=(2, 3), unbiased=False).sqrt()
    std_x = x.var(dim=(2, 3), unbiased=False).sqrt()
    assert (out_mean - y.mean).abs().max().item() < 1e-4
    expected_std = y.std * std_x / (std_x + eps)
    assert (out_std - expected_std).abs().max().item() < 1e-4


def test_adain_channel_mismatch():
    x = torch.randn(1, 3, 4, 4)
    y = AffineParams(mean=torch.zeros(1, 5), std=torch.ones(1, 5))
    with pytest.raises(ShapeError):
        adain(x, y)


def test_adain_rejects_bad_eps():
    x = torch.randn(1, 2, 4, 4)
    y = AffineParams(mean=torch.zeros(1, 2), std=torch.ones(1, 2))
    with pytest.raises(ConfigError):
        adain(x, y, eps=0.0)


# --- style extractor ---------------------------------------------------------


def test_style_list_matches_levels(bundle):
    img = torch.rand(2, 3, 32, 32)
    styles = bundle.extract_style(img)
    assert len(styles) == 6
    for y, c in zip(styles, bundle.config.level_channels):
        assert y.channels == c
        assert (y.std >= 0).all()


def test_zeroed_style_extractor_gives_softplus_zero(bundle):
    import copy

    se = copy.deepcopy(bundle.style_extractor)
    for p in se.parameters():
        torch.nn.init.zeros_(p)
    z = torch.randn(2, bundle.backbone.channels_of("relu3_2"))
    styles = se(z)
    for y in styles:
        assert y.mean.detach().abs().max().item() == 0.0
        assert y.std.detach().numpy() == pytest.approx(math.log(2.0), abs=1e-6)


def test_style_extraction_is_pure(bundle):
    img_a = torch.rand(1, 3, 32, 32)
    img_b = torch.rand(1, 3, 32, 32)
    alone = bundle.extract_style(img_a)
    bundle.extract_style(img_b)
    again = bundle.extract_style(img_a)
    for y1, y2 in zip(alone, again):
        assert torch.equal(y1.mean, y2.mean)
        assert torch.equal(y1.std, y2.std)


# --- encoder / decoder -------------------------------------------------------


def test_encode_shapes(bundle):
    img = torch.rand(1, 3, 32, 32)
    styles = bundle.extract_style(img)
    latent, levels = bundle.encode(img * 2 - 1, styles)
    cfg = bundle.config
    assert latent.shape == (1, cfg.latent_channels, cfg.latent_size, cfg.latent_size)
    assert len(levels) == 6
    assert levels[-1] is latent


def test_encode_rejects_wrong_style_count(bundle):
    img = torch.rand(1, 3, 32, 32)
    styles = bundle.extract_style(img)
    with pytest.raises(ConfigError):
        bundle.encode(img * 2 - 1, styles[:-1])


def test_encode_rejects_wrong_size(bundle):
    img = torch.rand(1, 3, 16, 16)
    styles = bundle.extract_style(torch.rand(1, 3, 32, 32))
    with pytest.raises(ShapeError):
        bundle.encode(img, styles)


def test_zeroed_residual_branch_gives_skip_identity():
    cfg = small_config()
    b = GeneratorBundle(cfg)
    for level in b.encoder.levels:
        level.zero_residual_branch()
    img = torch.rand(2, 3, 32, 32)
    styles = b.extract_style(img)
    _, outputs = b.encode(img * 2 - 1, styles)
    x = img * 2 - 1
    for level, o in zip(b.encoder.levels, outputs):
        v = torch.nn.functional.leaky_relu(level.transition(x), 0.2)
        assert (o - v).abs().max().item() < 1e-6
        x = o


def test_decode_output_contract(bundle):
    cfg = bundle.config
    latent = torch.randn(2, cfg.latent_channels, cfg.latent_size, cfg.latent_size)
    out = bundle.decode(latent)
    assert out.shape == (2, 3, 32, 32)
    assert out.min().item() >= -1.0 and out.max().item() <= 1.0


def test_decode_rejects_bad_latent(bundle):
    with pytest.raises(ShapeError):
        bundle.decode(torch.randn(1, 4, 2, 2))


@pytest.mark.parametrize("size", [32, 64])
def test_roundtrip_shape(size):
    cfg = small_config(image_size=size)
    b = GeneratorBundle(cfg)
    img = torch.rand(1, 3, size, size)
    out, logits = b(img)
    assert out.shape == img.shape
    assert logits.shape == (1, 17)


# --- classifier --------------------------------------------------------------


def test_classifier_emits_seventeen_logits(bundle):
    cfg = bundle.config
    latent = torch.randn(3, cfg.latent_channels, cfg.latent_size, cfg.latent_size)
    logits = bundle.classify_filter(latent)
    assert logits.shape == (3, 17)


def test_uniform_logit_tie_breaks_to_lowest_index():
    # documented rule: ties resolve to the lowest class index
    logits = np.zeros(17, dtype=np.float32)
    assert int(np.argmax(logits)) == 0


# --- discriminators ----------------------------------------------------------


def test_discriminator_map_smaller_than_input():
    cfg = small_config()
    d_glo, d_loc = build_discriminators(cfg)
    scores = d_glo(torch.rand(1, 3, 32, 32) * 2 - 1)
    assert scores.shape[1] == 1
    assert scores.shape[2] < 32 and scores.shape[3] < 32
    local = d_loc(torch.rand(1, 3, 16, 16) * 2 - 1)
    assert local.shape[2] < 16


def test_discriminator_rejects_wrong_size():
    d_glo, _ = build_discriminators(small_config())
    with pytest.raises(ShapeError):
        d_glo(torch.rand(1, 3, 16, 16))


def test_discriminator_deterministic():
    d_glo, _ = build_discriminators(small_config())
    x = torch.rand(2, 3, 32, 32)
    assert torch.equal(d_glo(x), d_glo(x))


def test_discriminators_share_no_parameters():
    d_glo, d_loc = build_discriminators(small_config())
    x = torch.rand(1, 3, 16, 16) * 2 - 1
    before = d_loc(x).clone()
    with torch.no_grad():
        for p in d_glo.parameters():
            p.add_(1.0)
    assert torch.equal(d_loc(x), before)


# --- backbone ----------------------------------------------------------------


def test_backbone_relu3_2_shape_at_256():
    backbone = FeatureBackbone(seed=151)
    feats = backbone.features(torch.rand(1, 3, 256, 256), ("relu3_2",))
    assert feats["relu3_2"].shape == (1, 256, 64, 64)


def test_backbone_deterministic(bundle):
    img = torch.rand(1, 3, 32, 32)
    a = bundle.backbone.features(img, ("relu3_2",))["relu3_2"]
    b = bundle.backbone.features(img, ("relu3_2",))["relu3_2"]
    assert torch.equal(a, b)


def test_backbone_parameters_frozen(bundle):
    assert all(not p.requires_grad for p in bundle.backbone.parameters())
    img = torch.rand(1, 3, 32, 32, requires_grad=True)
    feats = bundle.backbone.features(img, ("relu3_2",))
    feats["relu3_2"].sum().backward()
    assert img.grad is not None
    assert all(p.grad is None for p in bundle.backbone.parameters())


def test_backbone_unknown_tag(bundle):
    with pytest.raises(UnknownNameError):
        bundle.backbone.features(torch.rand(1, 3, 32, 32), ("relu9_9",))


def test_backbone_weights_file_roundtrip(tmp_path):
    first = FeatureBackbone(seed=7)
    path = tmp_path / "backbone.pt"
    torch.save(first.state_dict(), path)
    second = FeatureBackbone(seed=999, weights_path=str(path))
    img = torch.rand(1, 3, 32, 32)
    a = first.features(img, ("relu1_2",))["relu1_2"]
    b = second.features(img, ("relu1_2",))["relu1_2"]
    assert torch.equal(a, b)


# --- construction determinism and config validation --------------------------


def test_same_seed_same_parameters_and_outputs():
    cfg = small_config(seed=11)
    b1 = GeneratorBundle(cfg)
    b2 = GeneratorBundle(small_config(seed=11))
    for p1, p2 in zip(b1.state_dict().values(), b2.state_dict().values()):
        assert torch.equal(p1, p2)
    img = torch.rand(1, 3, 32, 32)
    out1, logits1 = b1(img)
    out2, logits2 = b2(img)
    assert torch.equal(out1, out2)
    assert torch.equal(logits1, logits2)


def test_different_seed_differs():
    b1 = GeneratorBundle(small_config(seed=1))
    b2 = GeneratorBundle(small_config(seed=2))
    p1 = next(iter(b1.encoder.parameters()))
    p2 = next(iter(b2.encoder.parameters()))
    assert not torch.equal(p1, p2)


def test_config_level_mismatch_rejected():
    with pytest.raises(ConfigError):
        GeneratorConfig(num_levels=6, level_channels=(8, 8, 8))
    with pytest.raises(ConfigError):
        GeneratorConfig(image_size=30)  # not divisible by 16
    with pytest.raises(UnknownNameError):
        GeneratorConfig(z_source_layer="relu7_7")


def test_trainable_parameters_exclude_backbone(bundle):
    trainable = set(id(p) for p in bundle.trainable_parameters())
    backbone = set(id(p) for p in bundle.backbone.parameters())
    assert trainable.isdisjoint(backbone)
    assert len(trainable) > 0
