"""Procedural outfit dataset: rendered compatible outfits plus a JSON manifest.

Layout: `<root>/images/<outfit_id>_<category>.png` and `<root>/manifest.json`.
Everything is a pure function of (seed, counts, resolution, rule), so a
rebuild with the same config is hash-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .render import render_item
from .specs import (
    CATEGORY_ORDER,
    Category,
    CompatibilityRule,
    OutfitSpec,
    oracle_score,
    sample_compatible_outfit,
)

MANIFEST_VERSION = 1
CATEGORY_NAMES = {c: c.name.lower() for c in CATEGORY_ORDER}


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    root: str
    train_count: int = 8000
    test_count: int = 2000
    resolution: int = 64
    rule: CompatibilityRule = field(default_factory=CompatibilityRule)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "train_count": self.train_count,
            "test_count": self.test_count,
            "resolution": self.resolution,
            "rule": self.rule.to_dict(),
            "seed": self.seed,
        }


@dataclass
class DatasetManifest:
    root: Path
    version: int
    seed: int
    resolution: int
    rule: CompatibilityRule
    splits: dict[str, list[str]]  # split -> outfit ids
    records: dict[str, dict]  # id -> {spec, files, compatible}

    def image_path(self, outfit_id: str, category: Category) -> Path:
        return self.root / self.records[outfit_id]["files"][CATEGORY_NAMES[category]]

    def outfit_spec(self, outfit_id: str) -> OutfitSpec:
        return OutfitSpec.from_dict(self.records[outfit_id]["spec"])

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "resolution": self.resolution,
            "rule": self.rule.to_dict(),
            "splits": self.splits,
            "records": self.records,
        }

    def save(self) -> Path:
        path = self.root / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1), encoding="utf-8")
        return path

    @classmethod
    def load(cls, root: str | Path) -> "DatasetManifest":
        root = Path(root)
        path = root / "manifest.json"
        if not path.is_file():
            raise DatasetError(f"no manifest at {path}")
        d = json.loads(path.read_text(encoding="utf-8"))
        manifest = cls(
            root=root,
            version=d["version"],
            seed=d["seed"],
            resolution=d["resolution"],
            rule=CompatibilityRule.from_dict(d["rule"]),
            splits=d["splits"],
            records=d["records"],
        )
        missing = [
            f for rec in manifest.records.values() for f in rec["files"].values()
            if not (root / f).is_file()
        ]
        if missing:
            raise DatasetError(f"{len(missing)} image files missing, e.g. {missing[0]}")
        return manifest


def image_to_png(image: np.ndarray, path: Path) -> None:
    arr = np.clip((np.asarray(image) + 1.0) / 2.0 * 255.0, 0, 255).round().astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def png_to_image(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return arr / 127.5 - 1.0


def build_dataset(config: DatasetConfig) -> DatasetManifest:
    """Render `train_count + test_count` compatible outfits and write the manifest."""
    root = Path(config.root)
    images_dir = root / "images"
    try:
        images_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create dataset directory {images_dir}: {exc}") from exc

    rng = np.random.default_rng(config.seed)
    total = config.train_count + config.test_count
    splits: dict[str, list[str]] = {"train": [], "test": []}
    records: dict[str, dict] = {}
    for idx in range(total):
        outfit_id = f"o{idx:06d}"
        split = "train" if idx < config.train_count else "test"
        spec = sample_compatible_outfit(rng, config.rule)
        score, label = oracle_score(spec.hues, spec.lightnesses, config.rule)
        files = {}
        for item in spec.items:
            name = f"{outfit_id}_{CATEGORY_NAMES[item.category]}.png"
            try:
                image_to_png(render_item(item, config.resolution), images_dir / name)
            except OSError as exc:
                raise DatasetError(f"failed writing {images_dir / name}: {exc}") from exc
            files[CATEGORY_NAMES[item.category]] = f"images/{name}"
        splits[split].append(outfit_id)
        records[outfit_id] = {
            "spec": spec.to_dict(),
            "files": files,
            "compatible": label,
            "score": score,
        }

    manifest = DatasetManifest(
        root=root,
        version=MANIFEST_VERSION,
        seed=config.seed,
        resolution=config.resolution,
        rule=config.rule,
        splits=splits,
        records=records,
    )
    manifest.save()
    return manifest


def load_outfit_images(manifest: DatasetManifest, outfit_id: str) -> np.ndarray:
    """All four item images of one outfit, shape (4, H, W, 3), category order."""
    return np.stack(
        [png_to_image(manifest.image_path(outfit_id, c)) for c in CATEGORY_ORDER]
    )


def load_category_images(
    manifest: DatasetManifest, category: Category, split: str = "train"
) -> np.ndarray:
    """All images of one category in a split, shape (N, H, W, 3)."""
    ids = manifest.splits[split]
    return np.stack([png_to_image(manifest.image_path(i, category)) for i in ids])
