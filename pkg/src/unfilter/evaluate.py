"""Dataset-level evaluation: restoration metrics, filter classification
confusion counts, and report serialization.

Scores compare each restored image against its original, both at the model
resolution. ``feat_dist`` is a perceptual distance computed with this
project's own backbone; it is deliberately named differently from externally
trained perceptual metrics because the two are not comparable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataset import load_manifest
from .filters import CLASS_NAMES, ORIGINAL
from .image import RgbImage, load_image
from .metrics import image_delta_e, psnr, ssim
from .training import Checkpoint, load_checkpoint, unfilter_image

log = logging.getLogger(__name__)


@dataclass
class MetricsReport:
    """Per-image scores, aggregate means, and a confusion matrix whose rows
    are true classes and columns predicted classes (class order: the sixteen
    filters then "original")."""

    per_image: list[dict] = field(default_factory=list)
    confusion: np.ndarray = field(
        default_factory=lambda: np.zeros((len(CLASS_NAMES), len(CLASS_NAMES)), dtype=np.int64)
    )
    skipped: list[str] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float | None:
        total = int(self.confusion.sum())
        if total == 0:
            return None
        return float(np.trace(self.confusion)) / total

    def aggregates(self) -> dict | None:
        if not self.per_image:
            return None
        keys = ("ssim", "psnr", "delta_e", "feat_dist")
        agg = {k: float(np.mean([row[k] for row in self.per_image])) for k in keys}
        agg["accuracy"] = self.accuracy
        agg["count"] = len(self.per_image)
        return agg

    def to_dict(self) -> dict:
        return {
            "per_image": self.per_image,
            "aggregates": self.aggregates(),
            "confusion": self.confusion.tolist(),
            "class_names": list(CLASS_NAMES),
            "skipped": self.skipped,
            "config_echo": self.config_echo,
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        raw = json.loads(Path(path).read_text())
        report = cls(
            per_image=raw["per_image"],
            confusion=np.array(raw["confusion"], dtype=np.int64),
            skipped=raw.get("skipped", []),
            config_echo=raw.get("config_echo", {}),
        )
        return report


def feature_distance(bundle, a: RgbImage, b: RgbImage, layer: str = "relu3_2") -> float:
    """Mean-normalized squared backbone-feature distance between two images."""
    ta = torch.from_numpy(a.to_unit().pixels.transpose(2, 0, 1)[None].copy())
    tb = torch.from_numpy(b.to_unit().pixels.transpose(2, 0, 1)[None].copy())
    with torch.no_grad():
        fa = bundle.backbone.features(ta, (layer,))[layer]
        fb = bundle.backbone.features(tb, (layer,))[layer]
    return float((fa - fb).pow(2).sum() / fa[0].numel())


def evaluate_dir(
    checkpoint: Checkpoint | str | Path,
    dataset_dir: str | Path,
    include_originals: bool = True,
    report_path: str | Path | None = None,
) -> MetricsReport:
    """Score every filtered image in a dataset against its original.

    Filtered entries contribute metric rows and confusion counts; original
    entries (when ``include_originals``) contribute confusion counts only.
    Entries whose original is missing are skipped and recorded.
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    bundle = checkpoint.restore_model()
    size = bundle.config.image_size
    manifest = load_manifest(dataset_dir)
    root = Path(dataset_dir)

    report = MetricsReport(
        config_echo={
            "dataset_dir": str(dataset_dir),
            "checkpoint": str(checkpoint.path) if checkpoint.path else None,
            "image_size": size,
            "include_originals": include_originals,
            "step": checkpoint.step,
        }
    )

    originals = {
        e["image_id"]: root / e["relative_path"]
        for e in manifest.entries
        if e["filter_name"] == ORIGINAL
    }
    original_cache: dict[str, RgbImage] = {}

    def original_for(image_id: str) -> RgbImage | None:
        if image_id not in originals or not originals[image_id].is_file():
            return None
        if image_id not in original_cache:
            original_cache[image_id] = load_image(originals[image_id]).resized(size, size)
        return original_cache[image_id]

    for entry in manifest.entries:
        name = entry["filter_name"]
        if name == ORIGINAL and not include_originals:
            continue
        path = root / entry["relative_path"]
        if not path.is_file():
            report.skipped.append(entry["relative_path"])
            continue
        target = original_for(entry["image_id"])
        if target is None:
            report.skipped.append(entry["relative_path"])
            log.warning("no original for %s; skipping", entry["relative_path"])
            continue
        restored, predicted = unfilter_image(checkpoint, load_image(path), bundle=bundle)
        true_idx = CLASS_NAMES.index(name)
        report.confusion[true_idx, CLASS_NAMES.index(predicted)] += 1
        if name == ORIGINAL:
            continue
        report.per_image.append(
            {
                "image_id": entry["image_id"],
                "filter_name": name,
                "predicted": predicted,
                "ssim": ssim(restored, target),
                "psnr": psnr(restored, target),
                "delta_e": image_delta_e(restored, target),
                "feat_dist": feature_distance(bundle, restored, target),
            }
        )

    if report_path is not None:
        report.save(report_path)
    return report


def baseline_delta_e(dataset_dir: str | Path, image_size: int) -> float | None:
    """Mean color difference of the filtered images themselves vs originals
    (the no-op restoration baseline)."""
    manifest = load_manifest(dataset_dir)
    root = Path(dataset_dir)
    originals = {
        e["image_id"]: root / e["relative_path"]
        for e in manifest.entries
        if e["filter_name"] == ORIGINAL
    }
    values = []
    cache: dict[str, RgbImage] = {}
    for entry in manifest.entries:
        if entry["filter_name"] == ORIGINAL:
            continue
        image_id = entry["image_id"]
        if image_id not in cache:
            cache[image_id] = load_image(originals[image_id]).resized(image_size, image_size)
        filtered = load_image(root / entry["relative_path"]).resized(image_size, image_size)
        values.append(image_delta_e(filtered, cache[image_id]))
    return float(np.mean(values)) if values else None


def format_confusion(report: MetricsReport, max_name: int = 9) -> str:
    """Text rendering of the confusion matrix with class-name labels."""
    names = [n[:max_name] for n in CLASS_NAMES]
    width = max(len(n) for n in names) + 1
    header = " " * width + "".join(f"{n:>{width}}" for n in names)
    lines = [header]
    for i, row in enumerate(report.confusion):
        cells = "".join(f"{int(v):>{width}}" for v in row)
        lines.append(f"{names[i]:>{width}}" + cells)
    if report.accuracy is not None:
        lines.append(f"accuracy: {report.accuracy:.4f}")
    return "\n".join(lines)
