"""Flat key-value config files and their mapping onto the typed configs.

File format: one ``section.key = value`` per line; ``#`` starts a comment.
Sections: ``train.*`` (training fields), ``loss.*`` (objective weights),
``model.*`` (architecture fields). Values are parsed as int, float, bool,
comma-separated tuples, or strings, in that order. The ``UNFILTER_SEED``
environment variable, when set, overrides every seed (for CI).
"""

from __future__ import annotations

import os
from pathlib import Path

from .errors import ConfigError
from .losses import LossWeights
from .model import GeneratorConfig
from .training import TrainConfig

ENV_SEED = "UNFILTER_SEED"

_TRAIN_KEYS = {
    "steps", "batch_size", "lr_gen", "lr_disc", "beta1", "beta2", "flip_prob",
    "seed", "checkpoint_every", "adv_mode", "deterministic", "dataset_dir",
    "out_dir", "backbone_weights", "image_cache_size", "sem_layers", "tex_layer",
}
_LOSS_KEYS = {"tex", "sem", "adv", "gp", "cls"}
_MODEL_KEYS = {
    "image_size", "num_levels", "level_channels", "level_strides",
    "style_trunk_width", "style_trunk_depth", "num_classes", "upsample_mode",
    "adain_eps", "z_source_layer", "backbone_seed", "disc_base_channels", "seed",
}


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(parse_value(part) for part in text.split(",") if part.strip())
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null"):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_file(path: str | Path) -> dict:
    """Read a flat key-value file into {'train.steps': 2000, ...}."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    values: dict[str, object] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = parse_value(value)
    return values


def env_seed() -> int | None:
    raw = os.environ.get(ENV_SEED)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{ENV_SEED} must be an integer, got {raw!r}") from exc


def build_train_config(values: dict, overrides: dict | None = None) -> TrainConfig:
    """Assemble a TrainConfig from flat file values plus flag overrides.

    ``overrides`` uses the same flat keys and wins over the file; the
    environment seed (when present) wins over both.
    """
    merged = dict(values)
    merged.update(overrides or {})
    train_kwargs: dict = {}
    loss_kwargs: dict = {}
    model_kwargs: dict = {}
    for key, value in merged.items():
        section, _, name = key.partition(".")
        if section == "train" and name in _TRAIN_KEYS:
            train_kwargs[name] = value
        elif section == "loss" and name in _LOSS_KEYS:
            loss_kwargs[name] = value
        elif section == "model" and name in _MODEL_KEYS:
            model_kwargs[name] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    seed = env_seed()
    if seed is not None:
        train_kwargs["seed"] = seed
        model_kwargs["seed"] = seed
    if "sem_layers" in train_kwargs and isinstance(train_kwargs["sem_layers"], str):
        train_kwargs["sem_layers"] = (train_kwargs["sem_layers"],)
    return TrainConfig(
        weights=LossWeights(**loss_kwargs),
        model=GeneratorConfig(**model_kwargs),
        **train_kwargs,
    )
