"""Canned pipeline profiles: a desk-scale 64px run and a small 32px CPU
profile used by the comparative evaluation suite. Each profile pins every
stage's configuration so a full pipeline run is a single function call."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .booster import BoosterPretrainConfig
from .gan import GanPretrainConfig
from .metrics import ClassifierConfig
from .pipeline import Paths, stage_dataset, stage_pretrain_booster, stage_pretrain_gan, stage_train_classifier
from .specs import CATEGORY_ORDER
from .train import TrainConfig, train


@dataclass(frozen=True)
class PipelineProfile:
    name: str
    resolution: int
    train_count: int
    test_count: int
    gan: GanPretrainConfig
    booster: BoosterPretrainConfig
    classifier: ClassifierConfig
    train: TrainConfig


def desk_profile() -> PipelineProfile:
    """64px profile mirroring the documented defaults (hours of CPU time)."""
    return PipelineProfile(
        name="desk",
        resolution=64,
        train_count=8000,
        test_count=2000,
        gan=GanPretrainConfig(iterations=6000, batch_size=16),
        booster=BoosterPretrainConfig(iterations=3000),
        classifier=ClassifierConfig(iterations=1000),
        train=TrainConfig(resolution=64, iterations=10000),
    )


def cpu_small_profile() -> PipelineProfile:
    """32px profile sized for a single CPU core; used by the acceptance suite."""
    return PipelineProfile(
        name="cpu-small",
        resolution=32,
        train_count=700,
        test_count=220,
        gan=GanPretrainConfig(iterations=2400, batch_size=16),
        booster=BoosterPretrainConfig(iterations=1600),
        classifier=ClassifierConfig(iterations=600),
        train=TrainConfig(
            resolution=32,
            iterations=1600,
            log_interval=50,
            checkpoint_interval=400,
            # at 32px the boosting stage needs a gentler step and heavier
            # objective weights than the 64px defaults: 2e-4 oscillates, and
            # with one latent round-trip per round the encoder sheds code
            # diversity faster than at full scale
            lr=1e-4,
            lambda_div=25.0,
            lambda_fcb=30.0,
        ),
    )


def run_pretraining(paths: Paths, profile: PipelineProfile, seed: int = 0) -> None:
    """Dataset, per-category GANs, booster, and the metric classifier."""
    stage_dataset(paths, profile.train_count, profile.test_count, profile.resolution, seed)
    for cat in CATEGORY_ORDER:
        stage_pretrain_gan(paths, cat, replace(profile.gan, seed=seed + int(cat)))
    stage_pretrain_booster(paths, replace(profile.booster, seed=seed))
    stage_train_classifier(paths, replace(profile.classifier, seed=seed))


def run_training(
    paths: Paths,
    profile: PipelineProfile,
    run_name: str = "full",
    seed: int = 0,
    **overrides,
) -> Path:
    cfg = TrainConfig.from_dict({
        **profile.train.to_dict(),
        "data_root": str(paths.dataset_dir),
        "pretrained_dir": str(paths.pretrained_dir),
        "run_dir": str(paths.run_dir(run_name)),
        "seed": seed,
        **overrides,
    })
    return train(cfg)
