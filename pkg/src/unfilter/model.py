"""Generator bundle: frozen feature backbone, style extractor, normalized
encoder, decoder, auxiliary classifier, and the two patch critics.

The encoder removes injected style by re-normalizing each level's feature
statistics with externally predicted affine parameters; skip connections
around every residual block preserve content. The backbone follows the
VGG16 convolutional layout and is never trained: it loads a user-supplied
weights file when given one, and otherwise uses a fixed random
initialization from a recorded seed so the whole test suite is hermetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError, UnknownNameError
from .filters import CLASS_NAMES

# Channel statistics the backbone input is normalized with (ImageNet RGB).
BACKBONE_MEAN = (0.485, 0.456, 0.406)
BACKBONE_STD = (0.229, 0.224, 0.225)

# VGG16 convolutional layout: (tag, out_channels); "pool" halves resolution.
BACKBONE_LAYOUT = (
    ("relu1_1", 64),
    ("relu1_2", 64),
    "pool",
    ("relu2_1", 128),
    ("relu2_2", 128),
    "pool",
    ("relu3_1", 256),
    ("relu3_2", 256),
    ("relu3_3", 256),
    "pool",
    ("relu4_1", 512),
    ("relu4_2", 512),
    ("relu4_3", 512),
    "pool",
    ("relu5_1", 512),
    ("relu5_2", 512),
    ("relu5_3", 512),
)

BACKBONE_TAGS = tuple(item[0] for item in BACKBONE_LAYOUT if isinstance(item, tuple))


@dataclass
class GeneratorConfig:
    """Architecture hyperparameters; serialized into every checkpoint."""

    image_size: int = 256
    num_levels: int = 6
    level_channels: tuple = (64, 128, 256, 256, 256, 256)
    level_strides: tuple = (2, 2, 2, 2, 1, 1)
    style_trunk_width: int = 512
    style_trunk_depth: int = 5
    num_classes: int = len(CLASS_NAMES)
    upsample_mode: str = "nearest"
    adain_eps: float = 1e-5
    z_source_layer: str = "relu3_2"
    backbone_seed: int = 151
    disc_base_channels: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        self.level_channels = tuple(self.level_channels)
        self.level_strides = tuple(self.level_strides)
        if len(self.level_channels) != self.num_levels:
            raise ConfigError(
                f"{len(self.level_channels)} channel entries for {self.num_levels} levels"
            )
        if len(self.level_strides) != self.num_levels:
            raise ConfigError(
                f"{len(self.level_strides)} stride entries for {self.num_levels} levels"
            )
        if any(s not in (1, 2) for s in self.level_strides):
            raise ConfigError("level strides must be 1 or 2")
        if self.z_source_layer not in BACKBONE_TAGS:
            raise UnknownNameError(
                f"unknown backbone layer {self.z_source_layer!r}; tags: {BACKBONE_TAGS}"
            )
        if self.adain_eps <= 0:
            raise ConfigError("adain_eps must be > 0")
        total = self.downsample_factor
        if self.image_size % total != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by downsample factor {total}"
            )
        if self.image_size // total < 2:
            raise ConfigError("image_size too small for the configured strides")

    @property
    def downsample_factor(self) -> int:
        return int(math.prod(self.level_strides))

    @property
    def latent_channels(self) -> int:
        return self.level_channels[-1]

    @property
    def latent_size(self) -> int:
        return self.image_size // self.downsample_factor

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AffineParams:
    """Target per-channel statistics for one normalization layer."""

    mean: torch.Tensor  # (N, C)
    std: torch.Tensor  # (N, C), nonnegative

    def __post_init__(self) -> None:
        if self.mean.shape != self.std.shape:
            raise ShapeError(f"mean/std shapes differ: {self.mean.shape} vs {self.std.shape}")

    @property
    def channels(self) -> int:
        return self.mean.shape[-1]


@dataclass
class BackboneEmbedding:
    """Pooled feature vector plus the per-layer maps it was pooled from."""

    z: torch.Tensor  # (N, C)
    per_layer: dict[str, torch.Tensor] = field(default_factory=dict)


def adain(x: torch.Tensor, y: AffineParams, eps: float = 1e-5) -> torch.Tensor:
    """Replace per-sample, per-channel spatial statistics of x with y's.

    out = std_y * (x - mean_x) / (std_x + eps) + mean_y, where mean_x/std_x
    are population statistics over the spatial locations of each channel.
    """
    if x.ndim != 4:
        raise ShapeError(f"expected NCHW feature map, got shape {tuple(x.shape)}")
    if y.channels != x.shape[1]:
        raise ShapeError(f"affine params have {y.channels} channels, feature map has {x.shape[1]}")
    if eps <= 0:
        raise ConfigError("eps must be > 0")
    mean_x = x.mean(dim=(2, 3), keepdim=True)
    var_x = x.var(dim=(2, 3), keepdim=True, unbiased=False)
    std_x = torch.sqrt(var_x)
    normalized = (x - mean_x) / (std_x + eps)
    return y.std.unsqueeze(-1).unsqueeze(-1) * normalized + y.mean.unsqueeze(-1).unsqueeze(-1)


class FeatureBackbone(nn.Module):
    """VGG16-layout convolutional feature extractor, frozen.

    Weights come from ``weights_path`` (a torch state_dict file) when given,
    otherwise from random init with the recorded seed.
    """

    def __init__(self, seed: int = 151, weights_path: str | None = None):
        super().__init__()
        convs = {}
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            in_c = 3
            for item in BACKBONE_LAYOUT:
                if item == "pool":
                    continue
                tag, out_c = item
                conv = nn.Conv2d(in_c, out_c, 3, padding=1)
                # variance-preserving init so random-weight features keep a
                # usable scale through the whole relu stack
                nn.init.kaiming_normal_(conv.weight, nonlinearity="relu")
                nn.init.zeros_(conv.bias)
                convs[tag.replace("relu", "conv")] = conv
                in_c = out_c
        self.convs = nn.ModuleDict(convs)
        mean = torch.tensor(BACKBONE_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(BACKBONE_STD).view(1, 3, 1, 1)
        self.register_buffer("input_mean", mean)
        self.register_buffer("input_std", std)
        if weights_path is not None:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            self.load_state_dict(state)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):  # stay frozen even inside .train() calls
        return super().train(False)

    def channels_of(self, tag: str) -> int:
        for item in BACKBONE_LAYOUT:
            if isinstance(item, tuple) and item[0] == tag:
                return item[1]
        raise UnknownNameError(f"unknown backbone layer {tag!r}; tags: {BACKBONE_TAGS}")

    def features(self, img_unit: torch.Tensor, tags: tuple[str, ...]) -> dict[str, torch.Tensor]:
        """Feature maps at the requested tags for an NCHW image in [0, 1]."""
        for tag in tags:
            if tag not in BACKBONE_TAGS:
                raise UnknownNameError(f"unknown backbone layer {tag!r}; tags: {BACKBONE_TAGS}")
        if img_unit.ndim != 4 or img_unit.shape[1] != 3:
            raise ShapeError(f"expected N×3×H×W image tensor, got {tuple(img_unit.shape)}")
        wanted = set(tags)
        deepest = max(BACKBONE_TAGS.index(t) for t in tags)
        x = (img_unit - self.input_mean) / self.input_std
        out: dict[str, torch.Tensor] = {}
        seen = 0
        for item in BACKBONE_LAYOUT:
            if item == "pool":
                x = F.max_pool2d(x, 2)
                continue
            tag, _ = item
            x = F.relu(self.convs[tag.replace("relu", "conv")](x))
            if tag in wanted:
                out[tag] = x
            if seen == deepest:
                break
            seen += 1
        return out

    def embed(self, img_unit: torch.Tensor, tag: str) -> BackboneEmbedding:
        feats = self.features(img_unit, (tag,))
        z = feats[tag].mean(dim=(2, 3))
        return BackboneEmbedding(z=z, per_layer=feats)


class StyleExtractor(nn.Module):
    """Fully-connected trunk with one linear head per encoder level.

    Each head emits the (mean, raw std) pair for its normalization layer;
    softplus keeps the predicted std nonnegative.
    """

    def __init__(self, in_dim: int, config: GeneratorConfig):
        super().__init__()
        width = config.style_trunk_width
        layers: list[nn.Module] = []
        prev = in_dim
        for _ in range(config.style_trunk_depth):
            layers += [nn.Linear(prev, width), nn.LeakyReLU(0.2)]
            prev = width
        self.trunk = nn.Sequential(*layers)
        self.heads = nn.ModuleList(
            [nn.Linear(width, 2 * c) for c in config.level_channels]
        )

    def forward(self, z: torch.Tensor) -> list[AffineParams]:
        h = self.trunk(z)
        styles = []
        for head in self.heads:
            out = head(h)
            mean, raw_std = out.chunk(2, dim=-1)
            styles.append(AffineParams(mean=mean, std=F.softplus(raw_std)))
        return styles


class EncoderLevel(nn.Module):
    """One level: transition conv producing v, then o = r(v, y) + v where
    the residual branch r is conv → adain → activation → conv."""

    def __init__(self, in_c: int, out_c: int, stride: int, eps: float):
        super().__init__()
        self.eps = eps
        self.transition = nn.Conv2d(in_c, out_c, 3, stride=stride, padding=1)
        self.res_conv1 = nn.Conv2d(out_c, out_c, 3, padding=1)
        self.res_conv2 = nn.Conv2d(out_c, out_c, 3, padding=1)

    def forward(self, x: torch.Tensor, y: AffineParams) -> torch.Tensor:
        v = F.leaky_relu(self.transition(x), 0.2)
        h = self.res_conv1(v)
        h = adain(h, y, self.eps)
        h = F.leaky_relu(h, 0.2)
        return self.res_conv2(h) + v

    def zero_residual_branch(self) -> None:
        """Make the residual branch the zero map (for the skip identity)."""
        nn.init.zeros_(self.res_conv2.weight)
        nn.init.zeros_(self.res_conv2.bias)


class Encoder(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        levels = []
        in_c = 3
        for out_c, stride in zip(config.level_channels, config.level_strides):
            levels.append(EncoderLevel(in_c, out_c, stride, config.adain_eps))
            in_c = out_c
        self.levels = nn.ModuleList(levels)

    def forward(
        self, img_signed: torch.Tensor, styles: list[AffineParams]
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        if len(styles) != len(self.levels):
            raise ConfigError(
                f"got {len(styles)} style parameter sets for {len(self.levels)} encoder levels"
            )
        x = img_signed
        outputs = []
        for level, y in zip(self.levels, styles):
            x = level(x, y)
            outputs.append(x)
        return x, outputs


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = nn.InstanceNorm2d(channels, affine=True)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.InstanceNorm2d(channels, affine=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.leaky_relu(self.norm1(self.conv1(x)), 0.2)
        h = self.norm2(self.conv2(h))
        return x + h


class Decoder(nn.Module):
    """Upsample + conv stages, one per stride-2 encoder level, each followed
    by a residual block; bounded output via tanh."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.upsample_mode = config.upsample_mode
        down_channels = [
            c for c, s in zip(config.level_channels, config.level_strides) if s == 2
        ]
        stage_channels = down_channels[::-1]  # e.g. (256, 256, 128, 64)
        self.entry = ResBlock(config.latent_channels)
        convs = []
        blocks = []
        in_c = config.latent_channels
        for out_c in stage_channels:
            convs.append(nn.Conv2d(in_c, out_c, 3, padding=1))
            blocks.append(ResBlock(out_c))
            in_c = out_c
        self.stage_convs = nn.ModuleList(convs)
        self.stage_blocks = nn.ModuleList(blocks)
        self.to_rgb = nn.Conv2d(in_c, 3, 3, padding=1)

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        x = self.entry(latent)
        for conv, block in zip(self.stage_convs, self.stage_blocks):
            x = F.interpolate(x, scale_factor=2, mode=self.upsample_mode)
            x = F.leaky_relu(conv(x), 0.2)
            x = block(x)
        return torch.tanh(self.to_rgb(x))


class FilterClassifier(nn.Module):
    """Feed-forward head on the pooled latent predicting the filter class."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.fc1 = nn.Linear(config.latent_channels, 256)
        self.fc2 = nn.Linear(256, config.num_classes)

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        h = latent.mean(dim=(2, 3))
        return self.fc2(F.leaky_relu(self.fc1(h), 0.2))


class PatchDiscriminator(nn.Module):
    """Strided-conv critic emitting a grid of per-patch scores (no output
    nonlinearity, no normalization layers). The number of strided stages
    adapts to the input size so small crops still leave a score grid."""

    def __init__(self, input_size: int, base_channels: int = 64):
        super().__init__()
        if input_size < 8:
            raise ConfigError(f"critic input size must be >= 8, got {input_size}")
        self.input_size = input_size
        n_strided = min(3, max(1, int(math.log2(input_size // 4))))
        layers: list[nn.Module] = []
        in_c, out_c = 3, base_channels
        for _ in range(n_strided):
            layers += [nn.Conv2d(in_c, out_c, 4, stride=2, padding=1), nn.LeakyReLU(0.2)]
            in_c, out_c = out_c, out_c * 2
        layers += [nn.Conv2d(in_c, out_c, 4, stride=1, padding=1), nn.LeakyReLU(0.2)]
        layers += [nn.Conv2d(out_c, 1, 4, stride=1, padding=1)]
        self.net = nn.Sequential(*layers)

    def forward(self, img_signed: torch.Tensor) -> torch.Tensor:
        if img_signed.shape[-2:] != (self.input_size, self.input_size):
            raise ShapeError(
                f"critic expects {self.input_size}×{self.input_size} input, "
                f"got {tuple(img_signed.shape[-2:])}"
            )
        return self.net(img_signed)


class GeneratorBundle(nn.Module):
    """Everything the filter-removal model needs for a forward pass."""

    def __init__(
        self,
        config: GeneratorConfig | None = None,
        backbone_weights: str | None = None,
    ):
        super().__init__()
        self.config = config or GeneratorConfig()
        self.backbone = FeatureBackbone(self.config.backbone_seed, backbone_weights)
        z_dim = self.backbone.channels_of(self.config.z_source_layer)
        with torch.random.fork_rng():
            torch.manual_seed(self.config.seed)
            self.style_extractor = StyleExtractor(z_dim, self.config)
            self.encoder = Encoder(self.config)
            self.decoder = Decoder(self.config)
            self.classifier = FilterClassifier(self.config)

    def trainable_parameters(self):
        """Parameters the generator optimizer owns (never the backbone's)."""
        for module in (self.style_extractor, self.encoder, self.decoder, self.classifier):
            yield from module.parameters()

    def extract_style(self, img_unit: torch.Tensor) -> list[AffineParams]:
        emb = self.backbone.embed(img_unit, self.config.z_source_layer)
        return self.style_extractor(emb.z)

    def encode(
        self, img_signed: torch.Tensor, styles: list[AffineParams]
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        if img_signed.shape[-2:] != (self.config.image_size, self.config.image_size):
            raise ShapeError(
                f"encoder expects {self.config.image_size}×{self.config.image_size} input, "
                f"got {tuple(img_signed.shape[-2:])}"
            )
        return self.encoder(img_signed, styles)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        expected = (self.config.latent_channels, self.config.latent_size, self.config.latent_size)
        if tuple(latent.shape[1:]) != expected:
            raise ShapeError(f"latent shape {tuple(latent.shape[1:])} != expected {expected}")
        return self.decoder(latent)

    def classify_filter(self, latent: torch.Tensor) -> torch.Tensor:
        return self.classifier(latent)

    def forward(self, img_unit: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Full removal pass: unit-range input → (unit-range output, logits)."""
        styles = self.extract_style(img_unit)
        latent, _ = self.encode(img_unit * 2.0 - 1.0, styles)
        out_signed = self.decode(latent)
        logits = self.classify_filter(latent)
        return (out_signed + 1.0) * 0.5, logits


def build_discriminators(config: GeneratorConfig) -> tuple[PatchDiscriminator, PatchDiscriminator]:
    """Global critic at full resolution, local critic at half-size crops.

    The two share no parameters.
    """
    with torch.random.fork_rng():
        torch.manual_seed(config.seed + 1)
        d_global = PatchDiscriminator(config.image_size, config.disc_base_channels)
        d_local = PatchDiscriminator(config.image_size // 2, config.disc_base_channels)
    return d_global, d_local
