import os
from pathlib import Path

import numpy as np
import pytest
import torch

torch.set_num_threads(1)

from fcboost import dataset, gan, booster
from fcboost.pipeline import Paths
from fcboost.specs import CATEGORY_ORDER
from fcboost.train import TrainConfig, train


@pytest.fixture(scope="session")
def tiny_home(tmp_path_factory) -> Paths:
    """Minimal end-to-end artifact set: barely-trained models, just for wiring.

    Built once per session; everything downstream (CLI, service, train tests)
    shares it.
    """
    home = tmp_path_factory.mktemp("fcboost_home")
    paths = Paths(home=home)
    cfg = dataset.DatasetConfig(
        root=str(paths.dataset_dir), train_count=24, test_count=10, resolution=32, seed=0
    )
    manifest = dataset.build_dataset(cfg)
    for cat in CATEGORY_ORDER:
        imgs = dataset.load_category_images(manifest, cat)
        gen, _ = gan.pretrain_category_gan(
            imgs, cat, 32, gan.GanPretrainConfig(iterations=12, batch_size=8, seed=int(cat))
        )
        gen.freeze()
        gen.save(paths.pretrained_dir)
    outfits = np.stack([dataset.load_outfit_images(manifest, i) for i in manifest.splits["train"]])
    model, _ = booster.pretrain_booster(
        outfits, 32, booster.BoosterPretrainConfig(iterations=12, batch_size=8)
    )
    model.freeze()
    model.save(paths.booster_path)
    return paths


@pytest.fixture(scope="session")
def tiny_run(tiny_home: Paths) -> Paths:
    """A short training run on top of the tiny artifacts."""
    cfg = TrainConfig(
        data_root=str(tiny_home.dataset_dir),
        pretrained_dir=str(tiny_home.pretrained_dir),
        run_dir=str(tiny_home.run_dir("default")),
        resolution=32,
        iterations=6,
        log_interval=2,
        checkpoint_interval=3,
        probe_size=4,
    )
    train(cfg)
    return tiny_home


@pytest.fixture(scope="session")
def tiny_manifest(tiny_home: Paths):
    return dataset.DatasetManifest.load(tiny_home.dataset_dir)
