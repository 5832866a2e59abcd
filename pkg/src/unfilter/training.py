"""Adversarial training loop, deterministic checkpointing, and inference.

Every stochastic choice (batch order, flips, crop corners, gradient-penalty
mixing) is drawn from one seeded numpy generator whose state is stored in
checkpoints, so deterministic runs are bit-reproducible and resumable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import pickle
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataset import DatasetManifest, load_manifest
from .errors import (
    CheckpointError,
    ConfigError,
    TrainingDivergenceError,
    ValidationError,
)
from .filters import CLASS_NAMES
from .image import RgbImage, SRGB_UNIT, load_image
from .losses import (
    LossBreakdown,
    LossWeights,
    classification_loss,
    critic_hinge_loss,
    critic_wasserstein_loss,
    generator_adversarial_loss,
    gradient_penalty,
    semantic_consistency,
    texture_idmrf,
)
from .model import GeneratorBundle, GeneratorConfig, build_discriminators

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "unfilter-checkpoint"
CHECKPOINT_VERSION = 1
TRAIN_LOG_NAME = "train_log.jsonl"


@dataclass
class TrainConfig:
    """Training hyperparameters. Defaults follow the reference recipe:
    Adam(0.5, 0.9), generator lr 2e-4, critic lr 1e-3 (constant), batch 8,
    horizontal flips only."""

    dataset_dir: str = ""
    out_dir: str = ""
    steps: int = 120_000
    batch_size: int = 8
    lr_gen: float = 2e-4
    lr_disc: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.9
    flip_prob: float = 0.5
    seed: int = 0
    checkpoint_every: int | None = None
    adv_mode: str = "wgan_gp"
    deterministic: bool = True
    image_cache_size: int = 512
    backbone_weights: str | None = None
    sem_layers: tuple = ("relu3_2",)
    tex_layer: str = "relu3_2"
    weights: LossWeights = field(default_factory=LossWeights)
    model: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self) -> None:
        self.sem_layers = tuple(self.sem_layers)
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if isinstance(self.model, dict):
            self.model = GeneratorConfig(**self.model)
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr_gen <= 0 or self.lr_disc <= 0:
            raise ConfigError("learning rates must be > 0")
        if not (0.0 <= self.flip_prob <= 1.0):
            raise ConfigError("flip_prob must be in [0, 1]")
        if self.adv_mode not in ("wgan_gp", "hinge"):
            raise ConfigError(f"adv_mode must be wgan_gp or hinge, got {self.adv_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


# ---------------------------------------------------------------------------
# checkpoint format


def _tree_to_numpy(obj):
    if isinstance(obj, torch.Tensor):
        return obj.detach().cpu().numpy()
    if isinstance(obj, dict):
        return {k: _tree_to_numpy(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        t = [_tree_to_numpy(v) for v in obj]
        return t if isinstance(obj, list) else tuple(t)
    return obj


def _tree_to_torch(obj):
    if isinstance(obj, np.ndarray):
        return torch.from_numpy(obj.copy())
    if isinstance(obj, dict):
        return {k: _tree_to_torch(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        t = [_tree_to_torch(v) for v in obj]
        return t if isinstance(obj, list) else tuple(t)
    return obj


@dataclass
class Checkpoint:
    """Deserialized checkpoint; `data` holds the raw (numpy) trees."""

    data: dict
    path: Path | None = None

    @property
    def step(self) -> int:
        return self.data["step"]

    @property
    def model_config(self) -> GeneratorConfig:
        return GeneratorConfig(**self.data["model_config"])

    @property
    def train_config(self) -> TrainConfig | None:
        raw = self.data.get("train_config")
        return TrainConfig.from_dict(raw) if raw else None

    def restore_model(self) -> GeneratorBundle:
        bundle = GeneratorBundle(self.model_config)
        bundle.load_state_dict(_tree_to_torch(self.data["params"]["generator"]))
        return bundle

    def restore_discriminators(self):
        d_glo, d_loc = build_discriminators(self.model_config)
        d_glo.load_state_dict(_tree_to_torch(self.data["params"]["disc_global"]))
        d_loc.load_state_dict(_tree_to_torch(self.data["params"]["disc_local"]))
        return d_glo, d_loc


def save_checkpoint(
    path: str | Path,
    bundle: GeneratorBundle,
    d_glo,
    d_loc,
    opt_g,
    opt_d,
    step: int,
    rng_state: dict,
    train_config: TrainConfig | None,
) -> Path:
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "step": int(step),
        "seed": bundle.config.seed,
        "model_config": bundle.config.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "params": {
            "generator": _tree_to_numpy(bundle.state_dict()),
            "disc_global": _tree_to_numpy(d_glo.state_dict()),
            "disc_local": _tree_to_numpy(d_loc.state_dict()),
        },
        "optim": {
            "gen": _tree_to_numpy(opt_g.state_dict()),
            "disc": _tree_to_numpy(opt_d.state_dict()),
        },
        "rng": rng_state,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pickle.dumps(payload, protocol=4))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        data = pickle.loads(path.read_bytes())
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not an unfilter checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {data.get('version')} unsupported "
            f"(this build reads version {CHECKPOINT_VERSION})"
        )
    return Checkpoint(data=data, path=path)


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# data plumbing


@dataclass
class TrainPair:
    input_path: Path
    target_path: Path
    label: int  # index into CLASS_NAMES


def build_pairs(manifest: DatasetManifest, dataset_dir: str | Path) -> list[TrainPair]:
    """Join every entry with its own original; originals pair with themselves."""
    root = Path(dataset_dir)
    originals = {
        e["image_id"]: e["relative_path"]
        for e in manifest.entries
        if e["filter_name"] == "original"
    }
    pairs = []
    for entry in manifest.entries:
        image_id = entry["image_id"]
        if image_id not in originals:
            raise ValidationError(f"image {image_id!r} has no original entry in the manifest")
        if entry["filter_name"] not in CLASS_NAMES:
            raise ValidationError(f"manifest filter {entry['filter_name']!r} is not a known class")
        pairs.append(
            TrainPair(
                input_path=root / entry["relative_path"],
                target_path=root / originals[image_id],
                label=CLASS_NAMES.index(entry["filter_name"]),
            )
        )
    return pairs


class _ImageCache:
    def __init__(self, size: int, target_hw: tuple[int, int]):
        self.size = size
        self.target_hw = target_hw
        self._store: OrderedDict[Path, np.ndarray] = OrderedDict()

    def get(self, path: Path) -> np.ndarray:
        if path in self._store:
            self._store.move_to_end(path)
            return self._store[path]
        img = load_image(path)
        if (img.height, img.width) != self.target_hw:
            img = img.resized(*self.target_hw)
        arr = img.pixels
        self._store[path] = arr
        if len(self._store) > self.size:
            self._store.popitem(last=False)
        return arr


def augment_pair(inp: np.ndarray, tgt: np.ndarray, flip: bool) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal flip applied to input and target together (or neither)."""
    if flip:
        return inp[:, ::-1].copy(), tgt[:, ::-1].copy()
    return inp, tgt


def _to_tensor(batch: list[np.ndarray]) -> torch.Tensor:
    arr = np.stack(batch).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(arr))


class _EpochSampler:
    """Cycles through the pair list, reshuffling on exhaustion."""

    def __init__(self, count: int, rng: np.random.Generator):
        self.count = count
        self.rng = rng
        self.order = rng.permutation(count)
        self.pos = 0

    def draw(self, n: int) -> list[int]:
        out: list[int] = []
        while len(out) < n:
            if self.pos >= self.count:
                self.order = self.rng.permutation(self.count)
                self.pos = 0
            out.append(int(self.order[self.pos]))
            self.pos += 1
        return out

    def state(self) -> dict:
        return {"order": self.order.tolist(), "pos": self.pos}

    def load_state(self, state: dict) -> None:
        self.order = np.array(state["order"], dtype=np.int64)
        self.pos = state["pos"]


# ---------------------------------------------------------------------------
# the loop


class Trainer:
    def __init__(self, config: TrainConfig):
        if not config.dataset_dir:
            raise ConfigError("dataset_dir is required")
        if not config.out_dir:
            raise ConfigError("out_dir is required")
        self.config = config
        self.manifest = load_manifest(config.dataset_dir)
        self.pairs = build_pairs(self.manifest, config.dataset_dir)
        if len(self.pairs) < config.batch_size:
            raise ValidationError(
                f"need at least batch_size={config.batch_size} paired images, "
                f"got {len(self.pairs)}"
            )
        if config.deterministic:
            torch.use_deterministic_algorithms(True)
        torch.manual_seed(config.seed)
        self.bundle = GeneratorBundle(config.model, config.backbone_weights)
        self.d_glo, self.d_loc = build_discriminators(config.model)
        self.opt_g = torch.optim.Adam(
            list(self.bundle.trainable_parameters()),
            lr=config.lr_gen,
            betas=(config.beta1, config.beta2),
        )
        self.opt_d = torch.optim.Adam(
            list(self.d_glo.parameters()) + list(self.d_loc.parameters()),
            lr=config.lr_disc,
            betas=(config.beta1, config.beta2),
        )
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.sampler = _EpochSampler(len(self.pairs), self.rng)
        size = config.model.image_size
        self.cache = _ImageCache(config.image_cache_size, (size, size))
        self.step = 0
        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._log_fh = None

    # -- rng state plumbing

    def _rng_state(self) -> dict:
        return {
            "numpy": self.rng.bit_generator.state,
            "sampler": self.sampler.state(),
        }

    def _load_rng_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state["numpy"]
        self.sampler.load_state(state["sampler"])

    def resume(self, checkpoint: Checkpoint) -> None:
        if checkpoint.data["model_config"] != self.config.model.to_dict():
            raise CheckpointError("checkpoint model configuration does not match")
        self.bundle.load_state_dict(_tree_to_torch(checkpoint.data["params"]["generator"]))
        self.d_glo.load_state_dict(_tree_to_torch(checkpoint.data["params"]["disc_global"]))
        self.d_loc.load_state_dict(_tree_to_torch(checkpoint.data["params"]["disc_local"]))
        self.opt_g.load_state_dict(_tree_to_torch(checkpoint.data["optim"]["gen"]))
        self.opt_d.load_state_dict(_tree_to_torch(checkpoint.data["optim"]["disc"]))
        self._load_rng_state(checkpoint.data["rng"])
        self.step = checkpoint.step

    # -- batches

    def _next_batch(self):
        idxs = self.sampler.draw(self.config.batch_size)
        flips = self.rng.random(len(idxs)) < self.config.flip_prob
        inputs, targets, labels = [], [], []
        for i, flip in zip(idxs, flips):
            pair = self.pairs[i]
            inp, tgt = augment_pair(
                self.cache.get(pair.input_path), self.cache.get(pair.target_path), bool(flip)
            )
            inputs.append(inp)
            targets.append(tgt)
            labels.append(pair.label)
        return _to_tensor(inputs), _to_tensor(targets), torch.tensor(labels, dtype=torch.long)

    def _crop_corner(self) -> tuple[int, int]:
        size = self.config.model.image_size
        crop = size // 2
        top = int(self.rng.integers(0, size - crop + 1))
        left = int(self.rng.integers(0, size - crop + 1))
        return top, left

    @staticmethod
    def _crop(x: torch.Tensor, top: int, left: int, crop: int) -> torch.Tensor:
        return x[:, :, top : top + crop, left : left + crop]

    # -- one optimization step

    def _critic_loss(self, real_scores, fake_scores):
        if self.config.adv_mode == "hinge":
            return critic_hinge_loss(real_scores, fake_scores)
        return critic_wasserstein_loss(real_scores, fake_scores)

    def train_step(self) -> LossBreakdown:
        cfg = self.config
        w = cfg.weights
        input_unit, target_unit, labels = self._next_batch()
        input_signed = input_unit * 2.0 - 1.0
        real_signed = target_unit * 2.0 - 1.0
        top, left = self._crop_corner()
        crop = cfg.model.image_size // 2
        gp_mix_glo = torch.from_numpy(self.rng.random(input_unit.shape[0], dtype=np.float64))
        gp_mix_loc = torch.from_numpy(self.rng.random(input_unit.shape[0], dtype=np.float64))

        # critic update (both discriminators, one step)
        with torch.no_grad():
            fake_unit, _ = self.bundle(input_unit)
        fake_signed = fake_unit * 2.0 - 1.0
        d_glo_term = self._critic_loss(self.d_glo(real_signed), self.d_glo(fake_signed))
        real_crop = self._crop(real_signed, top, left, crop)
        fake_crop = self._crop(fake_signed, top, left, crop)
        d_loc_term = self._critic_loss(self.d_loc(real_crop), self.d_loc(fake_crop))
        gp_glo = gradient_penalty(self.d_glo, real_signed, fake_signed, gp_mix_glo)
        gp_loc = gradient_penalty(self.d_loc, real_crop, fake_crop, gp_mix_loc)
        gp_total = gp_glo + gp_loc
        d_loss = d_glo_term + d_loc_term + w.gp * gp_total
        if not torch.isfinite(d_loss):
            self._abort(TrainingDivergenceError(f"critic loss is non-finite: {d_loss}"))
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()

        # generator update
        styles = self.bundle.extract_style(input_unit)
        latent, _ = self.bundle.encode(input_signed, styles)
        out_signed = self.bundle.decode(latent)
        out_unit = (out_signed + 1.0) * 0.5
        logits = self.bundle.classify_filter(latent)

        layers = tuple(dict.fromkeys(cfg.sem_layers + (cfg.tex_layer,)))
        out_feats = self.bundle.backbone.features(out_unit, layers)
        with torch.no_grad():
            gt_feats = self.bundle.backbone.features(target_unit, layers)
        sem = semantic_consistency(
            {k: out_feats[k] for k in cfg.sem_layers},
            {k: gt_feats[k] for k in cfg.sem_layers},
        )
        tex = texture_idmrf(out_feats[cfg.tex_layer], gt_feats[cfg.tex_layer])
        adv_glo = generator_adversarial_loss(self.d_glo(out_signed))
        adv_loc = generator_adversarial_loss(
            self.d_loc(self._crop(out_signed, top, left, crop))
        )
        cls = classification_loss(logits, labels)
        g_loss = w.tex * tex + w.sem * sem + w.adv * (adv_glo + adv_loc + w.cls * cls)

        try:
            breakdown = LossBreakdown.compute(
                tex=tex.item(), sem=sem.item(), glo=adv_glo.item(), loc=adv_loc.item(),
                gp=gp_total.item(), cls_term=cls.item(), weights=w,
            )
        except TrainingDivergenceError as exc:
            self._abort(exc)
        self.opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        self.opt_g.step()

        self.step += 1
        return breakdown

    def _abort(self, exc: TrainingDivergenceError):
        path = self.save(self.out_dir / "ckpt_abort.bin")
        raise TrainingDivergenceError(
            f"{exc} (step {self.step}; last good state saved to {path})"
        ) from exc

    # -- persistence and logging

    def save(self, path: str | Path | None = None) -> Path:
        if path is None:
            path = self.out_dir / f"ckpt_{self.step}.bin"
        return save_checkpoint(
            path, self.bundle, self.d_glo, self.d_loc, self.opt_g, self.opt_d,
            self.step, self._rng_state(), self.config,
        )

    def _log_record(self, breakdown: LossBreakdown) -> None:
        if self._log_fh is None:
            self._log_fh = open(self.out_dir / TRAIN_LOG_NAME, "a")
        record = {"step": self.step, **breakdown.to_dict(),
                  "lr_gen": self.config.lr_gen, "lr_disc": self.config.lr_disc}
        self._log_fh.write(json.dumps(record) + "\n")
        self._log_fh.flush()

    def run(self) -> Checkpoint:
        cfg = self.config
        log.info("training for %d steps on %d pairs", cfg.steps, len(self.pairs))
        try:
            while self.step < cfg.steps:
                breakdown = self.train_step()
                self._log_record(breakdown)
                if cfg.checkpoint_every and self.step % cfg.checkpoint_every == 0:
                    self.save()
                if self.step % 100 == 0 or self.step == cfg.steps:
                    log.info("step %d: total %.5g tex %.4g sem %.4g cls %.4g",
                             self.step, breakdown.total, breakdown.tex,
                             breakdown.sem, breakdown.cls)
        finally:
            if self._log_fh is not None:
                self._log_fh.close()
                self._log_fh = None
        final = self.save(self.out_dir / f"ckpt_{self.step}.bin")
        return load_checkpoint(final)


def train(config: TrainConfig, resume_from: str | Path | None = None) -> Checkpoint:
    """Run the training loop; returns the final checkpoint."""
    trainer = Trainer(config)
    if resume_from is not None:
        trainer.resume(load_checkpoint(resume_from))
    return trainer.run()


# ---------------------------------------------------------------------------
# inference


def unfilter_image(
    checkpoint: Checkpoint | str | Path,
    img: RgbImage,
    bundle: GeneratorBundle | None = None,
) -> tuple[RgbImage, str]:
    """Remove the filter from one image; returns (restored, predicted name).

    Pass ``bundle`` to reuse an already-restored model across many calls.
    """
    if bundle is None:
        if not isinstance(checkpoint, Checkpoint):
            checkpoint = load_checkpoint(checkpoint)
        bundle = checkpoint.restore_model()
    size = bundle.config.image_size
    prepared = img.to_unit().resized(size, size)
    tensor = torch.from_numpy(prepared.pixels.transpose(2, 0, 1)[None].copy())
    with torch.no_grad():
        out_unit, logits = bundle(tensor)
    pixels = out_unit[0].numpy().transpose(1, 2, 0)
    restored = RgbImage(np.clip(pixels, 0.0, 1.0), SRGB_UNIT)
    # ties resolve to the lowest class index (numpy argmax takes the first max)
    predicted = CLASS_NAMES[int(np.argmax(logits[0].numpy()))]
    return restored, predicted
