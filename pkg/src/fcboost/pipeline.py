"""Stage orchestration shared by the CLI, the service, and the evaluation
harness: artifact locations under a home directory, stage prerequisites, and
the higher-level evaluation routines (per-setting FID / diversity / oracle
score and cross-model fill-in-the-blank ranking)."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import metrics as metrics_mod
from .booster import BoosterModel, BoosterPretrainConfig, pretrain_booster
from .checkpoint import load_checkpoint, load_module, save_module
from .dataset import DatasetConfig, DatasetManifest, build_dataset, load_category_images, load_outfit_images
from .gan import CategoryGenerator, GanPretrainConfig, pretrain_category_gan
from .metrics import (
    ClassifierConfig,
    MethodRun,
    PerceptualDistance,
    diversity_eval,
    f2bt,
    feature_stats,
    fid,
    oracle_outfit_score,
    train_classifier,
)
from .networks import CategoryClassifier, W_DIM
from .specs import CATEGORY_ORDER, NUM_CATEGORIES, Category
from .train import FcbModels, TrainConfig, load_trained, make_probe, mask_outfit

DEFAULT_HOME = "~/.fcboost"


class MissingArtifact(RuntimeError):
    """A pipeline stage prerequisite is absent; `name` says which one."""

    def __init__(self, name: str, path: Path):
        super().__init__(f"missing {name}: expected artifact at {path}")
        self.name = name
        self.path = path


@dataclass
class Paths:
    home: Path

    @classmethod
    def from_env(cls, home: str | None = None) -> "Paths":
        root = Path(home or os.environ.get("FCBOOST_HOME") or DEFAULT_HOME).expanduser()
        return cls(home=root)

    @property
    def dataset_dir(self) -> Path:
        return self.home / "dataset"

    @property
    def pretrained_dir(self) -> Path:
        return self.home / "pretrained"

    @property
    def booster_path(self) -> Path:
        return self.pretrained_dir / "booster.ckpt"

    @property
    def classifier_path(self) -> Path:
        return self.pretrained_dir / "classifier.ckpt"

    def run_dir(self, name: str = "default") -> Path:
        return self.home / "runs" / name

    def require_dataset(self) -> DatasetManifest:
        if not (self.dataset_dir / "manifest.json").is_file():
            raise MissingArtifact("dataset", self.dataset_dir / "manifest.json")
        return DatasetManifest.load(self.dataset_dir)

    def require_generator(self, category: Category) -> None:
        p = self.pretrained_dir / f"mapping_{category.name.lower()}.ckpt"
        if not p.is_file():
            raise MissingArtifact(f"generator:{category.name.lower()}", p)

    def require_booster(self) -> None:
        if not self.booster_path.is_file():
            raise MissingArtifact("booster", self.booster_path)

    def require_classifier(self) -> None:
        if not self.classifier_path.is_file():
            raise MissingArtifact("classifier", self.classifier_path)

    def require_run(self, name: str = "default") -> Path:
        p = self.run_dir(name) / "state.ckpt"
        if not p.is_file():
            raise MissingArtifact(f"run:{name}", p)
        return p


def stage_dataset(paths: Paths, train_count: int, test_count: int, resolution: int, seed: int) -> DatasetManifest:
    return build_dataset(DatasetConfig(
        root=str(paths.dataset_dir), train_count=train_count, test_count=test_count,
        resolution=resolution, seed=seed,
    ))


def stage_pretrain_gan(paths: Paths, category: Category, config: GanPretrainConfig) -> list[dict]:
    manifest = paths.require_dataset()
    images = load_category_images(manifest, category)
    gen, log = pretrain_category_gan(images, category, manifest.resolution, config)
    gen.freeze()
    gen.save(paths.pretrained_dir, config={"iterations": config.iterations, "seed": config.seed})
    return log


def stage_pretrain_booster(paths: Paths, config: BoosterPretrainConfig) -> list[dict]:
    manifest = paths.require_dataset()
    outfits = np.stack([load_outfit_images(manifest, i) for i in manifest.splits["train"]])
    model, log = pretrain_booster(outfits, manifest.resolution, config)
    model.freeze()
    model.save(paths.booster_path, config={"iterations": config.iterations, "seed": config.seed})
    return log


def stage_train_classifier(paths: Paths, config: ClassifierConfig = ClassifierConfig()) -> Path:
    manifest = paths.require_dataset()
    images, labels = [], []
    for cat in CATEGORY_ORDER:
        imgs = load_category_images(manifest, cat)
        images.append(imgs)
        labels.append(np.full(imgs.shape[0], int(cat)))
    model = train_classifier(np.concatenate(images), np.concatenate(labels), manifest.resolution, config)
    save_module(paths.classifier_path, "classifier", model, {"resolution": manifest.resolution})
    return paths.classifier_path


def load_classifier(paths: Paths) -> CategoryClassifier:
    paths.require_classifier()
    header, _ = load_checkpoint(paths.classifier_path)
    model = CategoryClassifier(header["meta"]["resolution"])
    load_module(paths.classifier_path, "classifier", model)
    model.eval()
    return model


def check_train_prereqs(paths: Paths) -> None:
    paths.require_dataset()
    for cat in CATEGORY_ORDER:
        paths.require_generator(cat)
    paths.require_booster()


def model_hash_for_run(run_state: Path) -> str:
    return hashlib.sha256(run_state.read_bytes()).hexdigest()[:16]


@dataclass
class EvalCases:
    """Fixed held-out given-sets shared across all evaluated models."""

    given_images: torch.Tensor  # (N, 4, 3, H, W)
    given_masks: torch.Tensor  # (N, 4) bool
    z: torch.Tensor  # (N, K, w_dim)

    @property
    def n_given(self) -> torch.Tensor:
        return self.given_masks.sum(dim=1)


def make_eval_cases(manifest: DatasetManifest, count: int, k: int, seed: int = 2024) -> EvalCases:
    ids = manifest.splits["test"]
    rng = torch.Generator().manual_seed(seed)
    idx = torch.randint(0, len(ids), (count,), generator=rng)
    arr = np.stack([load_outfit_images(manifest, ids[int(i)]) for i in idx])
    given = torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 1, 4, 2, 3))).float()
    masks = []
    for _ in range(count):
        n_given = int(torch.randint(1, 4, (), generator=rng))
        masks.append(mask_outfit(rng, n_given))
    z = torch.randn(count, k, W_DIM, generator=rng)
    return EvalCases(given_images=given, given_masks=torch.stack(masks), z=z)


@torch.no_grad()
def complete_cases(models: FcbModels, cases: EvalCases, t_rounds: int, batch: int = 32) -> torch.Tensor:
    """Final-round completions, shape (N, K, 4, 3, H, W)."""
    outs = []
    for start in range(0, cases.given_images.shape[0], batch):
        sl = slice(start, start + batch)
        out = models.complete(cases.given_images[sl], cases.given_masks[sl], cases.z[sl], t_rounds)
        outs.append(out.images[-1])
    return torch.cat(outs)


def _per_setting(values: list[float], settings: list[int]) -> dict[str, float]:
    report = {}
    for n in (1, 2, 3):
        vals = [v for v, s in zip(values, settings) if s == n]
        report[str(n)] = float(np.mean(vals)) if vals else float("nan")
    report["Avg."] = float(np.mean(values)) if values else float("nan")
    return report


def eval_oracle(completed: torch.Tensor, cases: EvalCases) -> dict[str, float]:
    """Mean oracle score of final completions (first code per case)."""
    vals, settings = [], []
    for s in range(completed.shape[0]):
        arr = completed[s, 0].permute(0, 2, 3, 1).numpy()
        try:
            vals.append(oracle_outfit_score(arr))
        except metrics_mod.BlankImageError:
            vals.append(0.0)
        settings.append(int(cases.n_given[s]))
    return _per_setting(vals, settings)


def eval_fid(completed: torch.Tensor, cases: EvalCases, manifest: DatasetManifest,
             classifier: CategoryClassifier) -> dict[str, float]:
    """Frechet distance between real test items and synthesized target items, per setting."""
    real = {}
    for cat in CATEGORY_ORDER:
        imgs = load_category_images(manifest, cat, split="test")
        real[int(cat)] = torch.from_numpy(np.ascontiguousarray(imgs.transpose(0, 3, 1, 2))).float()

    report = {}
    all_fake = []
    settings = cases.n_given
    for n in (1, 2, 3):
        rows = torch.nonzero(settings == n, as_tuple=False).squeeze(-1)
        fakes = []
        for s in rows.tolist():
            target_idx = torch.nonzero(~cases.given_masks[s], as_tuple=False).squeeze(-1)
            fakes.append(completed[s][:, target_idx].reshape(-1, 3, *completed.shape[-2:]))
        if not fakes:
            report[str(n)] = float("nan")
            continue
        fake = torch.cat(fakes)
        all_fake.append(fake)
        real_all = torch.cat(list(real.values()))
        report[str(n)] = fid(
            feature_stats(real_all, classifier.features),
            feature_stats(fake, classifier.features),
        )
    fake = torch.cat(all_fake)
    real_all = torch.cat(list(real.values()))
    report["Avg."] = fid(
        feature_stats(real_all, classifier.features),
        feature_stats(fake, classifier.features),
    )
    return report


def eval_diversity(models: FcbModels, cases: EvalCases, k: int, t_rounds: int, seed: int = 0) -> dict[str, float]:
    distance = PerceptualDistance(models.booster.backbone)

    def complete_fn(given_images, given_masks, z):
        outs = []
        for start in range(0, given_images.shape[0], 16):
            sl = slice(start, start + 16)
            outs.append(models.complete(given_images[sl], given_masks[sl], z[sl], t_rounds).images[-1])
        return torch.cat(outs)

    return diversity_eval(complete_fn, cases.given_images, cases.given_masks, k, distance, seed=seed)


def eval_f2bt(completions: dict[str, torch.Tensor], cases: EvalCases) -> dict[str, dict[str, float]]:
    """Cross-model fill-in-the-blank ranking, per n_given setting and overall."""
    settings = cases.n_given
    out: dict[str, dict[str, float]] = {name: {} for name in completions}
    for key, rows in [("1", settings == 1), ("2", settings == 2), ("3", settings == 3),
                      ("Avg.", torch.ones_like(settings, dtype=torch.bool))]:
        idx = torch.nonzero(rows, as_tuple=False).squeeze(-1).tolist()
        if not idx:
            for name in completions:
                out[name][key] = float("nan")
            continue
        runs = [
            MethodRun(name, [comp[s, 0].permute(0, 2, 3, 1).numpy() for s in idx])
            for name, comp in completions.items()
        ]

        def safe_score(images):
            try:
                return oracle_outfit_score(images)
            except metrics_mod.BlankImageError:
                return 0.0

        pct = f2bt(runs, scorer=safe_score)
        for name, value in pct.items():
            out[name][key] = value
    return out
