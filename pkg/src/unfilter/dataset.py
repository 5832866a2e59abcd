"""Paired dataset synthesis: originals plus one filtered copy per filter.

Output layout::

    <out_dir>/original/<image_id>.png
    <out_dir>/<filter_name>/<image_id>.png   (one directory per filter)
    <out_dir>/manifest.json

The whole tree is a pure function of (source bytes, size, seed): grain seeds
are derived per image from the global seed, resizing is done by our own
bilinear kernel, and PNGs are written without ancillary chunks.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .filters import FILTER_NAMES, ORIGINAL, apply_filter, builtin_filter, registry_version
from .image import load_image, save_png

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}

MANIFEST_NAME = "manifest.json"


@dataclass
class DatasetManifest:
    """Index of a synthesized dataset; serialized as manifest.json."""

    seed: int
    image_size: tuple[int, int]
    entries: list[dict] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    registry_version: int = 1

    def image_ids(self) -> list[str]:
        return sorted({e["image_id"] for e in self.entries})

    def filter_names(self) -> list[str]:
        """Filter names present, registry order, excluding "original"."""
        present = {e["filter_name"] for e in self.entries}
        return [n for n in FILTER_NAMES if n in present]

    def entries_for(self, filter_name: str) -> list[dict]:
        return [e for e in self.entries if e["filter_name"] == filter_name]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "image_size": list(self.image_size),
            "entries": self.entries,
            "skipped": self.skipped,
            "registry_version": self.registry_version,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        raw = json.loads(Path(path).read_text())
        return cls(
            seed=raw["seed"],
            image_size=tuple(raw["image_size"]),
            entries=raw["entries"],
            skipped=raw.get("skipped", []),
            registry_version=raw.get("registry_version", 1),
        )


def derive_grain_seed(seed: int, image_id: str) -> int:
    """Stable 63-bit per-image seed; independent of platform and run."""
    digest = hashlib.blake2b(f"{seed}:{image_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def list_source_images(src_dir: str | Path) -> list[Path]:
    src = Path(src_dir)
    if not src.is_dir():
        raise ValidationError(f"source directory {src} does not exist")
    files = sorted(p for p in src.iterdir() if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES)
    return files


def synthesize_dataset(
    src_dir: str | Path,
    out_dir: str | Path,
    size: tuple[int, int] = (256, 256),
    seed: int = 0,
    filters: tuple[str, ...] | None = None,
) -> DatasetManifest:
    """Build the paired dataset tree and write its manifest.

    ``filters`` restricts the filter set (default: all sixteen). Every
    decodable source image yields one entry per filter plus an "original"
    entry; undecodable files are skipped with a warning and recorded.
    """
    names = tuple(filters) if filters is not None else FILTER_NAMES
    specs = [builtin_filter(n) for n in names]  # validates names up front
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    sources = list_source_images(src_dir)
    if not sources:
        raise ValidationError(f"no image files found in {src_dir}")

    manifest = DatasetManifest(seed=int(seed), image_size=tuple(size), registry_version=registry_version())
    seen_ids: set[str] = set()
    for src_path in sources:
        image_id = src_path.stem
        if image_id in seen_ids:
            raise ValidationError(f"duplicate image id {image_id!r} (stems must be unique)")
        try:
            img = load_image(src_path)
        except ValidationError as exc:
            log.warning("skipping %s: %s", src_path.name, exc)
            manifest.skipped.append(src_path.name)
            continue
        seen_ids.add(image_id)
        base = img.resized(size[0], size[1])

        rel = f"{ORIGINAL}/{image_id}.png"
        save_png(base, out / rel)
        manifest.entries.append({"image_id": image_id, "filter_name": ORIGINAL, "relative_path": rel})

        grain_seed = derive_grain_seed(seed, image_id)
        for spec in specs:
            filtered = apply_filter(base, spec.reseeded(grain_seed))
            rel = f"{spec.name}/{image_id}.png"
            save_png(filtered, out / rel)
            manifest.entries.append(
                {"image_id": image_id, "filter_name": spec.name, "relative_path": rel}
            )

    if not manifest.entries:
        raise ValidationError(f"no decodable images in {src_dir}")
    manifest.save(out / MANIFEST_NAME)
    return manifest


def load_manifest(dataset_dir: str | Path) -> DatasetManifest:
    path = Path(dataset_dir) / MANIFEST_NAME
    if not path.is_file():
        raise ValidationError(f"{path} not found; is {dataset_dir} a synthesized dataset?")
    return DatasetManifest.load(path)
