import json

import numpy as np
import pytest
import torch

from fcboost.checkpoint import CheckpointError
from fcboost.dataset import DatasetManifest
from fcboost.gan import parameter_hash
from fcboost.networks import W_DIM
from fcboost.pipeline import Paths
from fcboost.train import (
    FcbModels,
    TrainConfig,
    TrainState,
    _sample_batch,
    diversity_loss,
    load_split_tensor,
    load_trained,
    make_probe,
    mask_outfit,
    total_loss,
    train,
)


def base_config(home: Paths, run_name: str, **kw) -> TrainConfig:
    d = dict(
        data_root=str(home.dataset_dir),
        pretrained_dir=str(home.pretrained_dir),
        run_dir=str(home.run_dir(run_name)),
        resolution=32,
        iterations=4,
        log_interval=2,
        checkpoint_interval=2,
        probe_size=2,
    )
    d.update(kw)
    return TrainConfig(**d)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(k=1)
    with pytest.raises(ValueError):
        TrainConfig(t_rounds=0)
    with pytest.raises(ValueError):
        TrainConfig(n_given_choices=(0, 1))


def test_config_hash_ignores_paths_and_logging():
    a = TrainConfig(data_root="/x", run_dir="/y", log_interval=10)
    b = TrainConfig(data_root="/z", run_dir="/w", log_interval=99)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != TrainConfig(lambda_div=0.0).config_hash()


def test_config_roundtrip(tmp_path):
    cfg = TrainConfig(iterations=7, n_given_choices=(2, 3))
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert TrainConfig.from_json(path) == cfg


def test_mask_outfit_counts():
    rng = torch.Generator().manual_seed(0)
    for n_given in (1, 2, 3):
        for _ in range(20):
            mask = mask_outfit(rng, n_given)
            assert mask.shape == (4,)
            assert int(mask.sum()) == n_given
    with pytest.raises(ValueError):
        mask_outfit(rng, 4)


def test_diversity_loss_value_and_validation():
    items = torch.zeros(3, 2, 3, 8, 8)
    items[1] += 1.0
    items[2] += 2.0
    dist = lambda a, b: (a - b).abs().mean()[None]
    # pairs (0,1), (0,2), (1,2) -> distances 1, 2, 1 -> mean 4/3, negated
    assert diversity_loss(items, dist).item() == pytest.approx(-4.0 / 3.0, abs=1e-6)
    with pytest.raises(ValueError):
        diversity_loss(items[:1], dist)


def test_total_loss_formula():
    cfg = TrainConfig(lambda_div=10.0, lambda_fcb=20.0)
    adv = [torch.tensor(1.0), torch.tensor(2.0)]
    div = [torch.tensor(-0.1), torch.tensor(-0.2)]
    fcb = [torch.tensor(0.3), torch.tensor(0.4)]
    expected = np.mean([1.0 - 1.0 + 6.0, 2.0 - 2.0 + 8.0])
    assert total_loss(adv, div, fcb, cfg).item() == pytest.approx(expected, abs=1e-6)
    with pytest.raises(ValueError):
        total_loss([], [], [], cfg)
    with pytest.raises(ValueError):
        total_loss(adv, div[:1], fcb, cfg)


def test_boost_forward_keeps_given_slots(tiny_home):
    models = FcbModels.create(tiny_home.pretrained_dir, 32, seed=0)
    g = torch.Generator().manual_seed(0)
    given = torch.randn(2, 4, 3, 32, 32, generator=g)
    mask = torch.tensor([[True, False, False, True], [False, True, True, False]])
    z = torch.randn(2, 3, W_DIM, generator=g)
    out = models.boost_forward(given, mask, z, t_rounds=2)
    assert len(out.images) == 3
    for t in range(3):
        imgs = out.images[t]
        assert imgs.shape == (2, 3, 4, 3, 32, 32)
        for s in range(2):
            for c in range(4):
                if mask[s, c]:
                    assert torch.equal(imgs[s, :, c], given[s, c][None].expand(3, -1, -1, -1))


def test_boost_forward_round0_uses_mapping(tiny_home):
    models = FcbModels.create(tiny_home.pretrained_dir, 32, seed=0)
    g = torch.Generator().manual_seed(1)
    given = torch.randn(1, 4, 3, 32, 32, generator=g)
    mask = torch.tensor([[True, False, False, False]])
    z = torch.randn(1, 2, W_DIM, generator=g)
    out = models.boost_forward(given, mask, z, t_rounds=1)
    from fcboost.specs import CATEGORY_ORDER

    cat = CATEGORY_ORDER[1]
    expected = models.generators[cat].random_item(z[0])
    assert torch.allclose(out.images[0][0, :, 1], expected, atol=1e-6)


def test_train_step_frozen_parts_get_no_grads(tiny_home, tiny_manifest):
    cfg = base_config(tiny_home, "unused")
    models = FcbModels.create(cfg.pretrained_dir, 32, seed=cfg.seed)
    state = TrainState(models, cfg)
    images = load_split_tensor(tiny_manifest, "train", limit=8)
    batch = _sample_batch(images, cfg, state.rng)
    before = {
        cat.name: (parameter_hash(models.generators[cat].mapping),
                   parameter_hash(models.generators[cat].synthesis))
        for cat in models.generators
    }
    booster_before = parameter_hash(models.booster)
    metrics = state.train_step(batch)
    assert set(metrics) == {"l_dis", "l_adv", "l_div", "l_fcb", "l_total"}
    for cat, gen in models.generators.items():
        assert all(p.grad is None for p in gen.mapping.parameters())
        assert all(p.grad is None for p in gen.synthesis.parameters())
        assert (parameter_hash(gen.mapping), parameter_hash(gen.synthesis)) == before[cat.name]
    assert all(p.grad is None for p in models.booster.parameters())
    assert parameter_hash(models.booster) == booster_before
    # the trainable parts did receive updates
    assert any(p.grad is not None for p in models.encoders[next(iter(models.encoders))].parameters())


def test_train_writes_expected_logs(tiny_run):
    run_dir = tiny_run.run_dir("default")
    lines = (run_dir / "metrics.jsonl").read_text().strip().splitlines()
    assert len(lines) == 3  # 6 iterations / log_interval 2
    for line in lines:
        rec = json.loads(line)
        assert {"iteration", "l_dis", "l_adv", "l_div", "l_fcb", "l_total"} <= set(rec)
        assert "probe_score_round0" in rec and "probe_score_round2" in rec
    assert (run_dir / "config.json").is_file()
    assert (run_dir / "state.ckpt").is_file()
    assert (run_dir / "state.ckpt.json").is_file()
    assert (run_dir / "ckpt_0000003.ckpt").is_file()


def test_train_bit_reproducible(tiny_home):
    cfg_a = base_config(tiny_home, "repro_a")
    cfg_b = base_config(tiny_home, "repro_b")
    state_a = train(cfg_a)
    state_b = train(cfg_b)
    assert state_a.read_bytes() == state_b.read_bytes()
    a_log = (tiny_home.run_dir("repro_a") / "metrics.jsonl").read_bytes()
    b_log = (tiny_home.run_dir("repro_b") / "metrics.jsonl").read_bytes()
    assert a_log == b_log


def test_resume_equivalence(tiny_home, tiny_manifest):
    cfg = base_config(tiny_home, "unused2", iterations=4)
    images = load_split_tensor(tiny_manifest, "train", limit=8)

    def fresh_state():
        models = FcbModels.create(cfg.pretrained_dir, 32, seed=cfg.seed)
        return TrainState(models, cfg)

    straight = fresh_state()
    for _ in range(4):
        straight.train_step(_sample_batch(images, cfg, straight.rng))

    first = fresh_state()
    for _ in range(2):
        first.train_step(_sample_batch(images, cfg, first.rng))
    mid = tiny_home.home / "mid_state.ckpt"
    first.save(mid)

    resumed = fresh_state()
    resumed.load(mid)
    assert resumed.iteration == 2
    for _ in range(2):
        resumed.train_step(_sample_batch(images, cfg, resumed.rng))

    end_a = tiny_home.home / "straight.ckpt"
    end_b = tiny_home.home / "resumed.ckpt"
    straight.save(end_a)
    resumed.save(end_b)
    assert end_a.read_bytes() == end_b.read_bytes()


def test_state_load_rejects_other_config(tiny_home):
    cfg = base_config(tiny_home, "unused3")
    models = FcbModels.create(cfg.pretrained_dir, 32, seed=cfg.seed)
    state = TrainState(models, cfg)
    path = tiny_home.home / "mismatch.ckpt"
    state.save(path)
    other_cfg = base_config(tiny_home, "unused3", lambda_fcb=0.0)
    other = TrainState(FcbModels.create(cfg.pretrained_dir, 32, seed=0), other_cfg)
    with pytest.raises(CheckpointError, match="config hash"):
        other.load(path)


def test_load_trained_inference_deterministic(tiny_run):
    cfg = TrainConfig.from_json(tiny_run.run_dir("default") / "config.json")
    models = load_trained(cfg)
    manifest = DatasetManifest.load(tiny_run.dataset_dir)
    probe = make_probe(load_split_tensor(manifest, "test", limit=2), cfg)
    a = models.complete(probe["given_images"], probe["given_mask"], probe["z"], cfg.t_rounds)
    b = models.complete(probe["given_images"], probe["given_mask"], probe["z"], cfg.t_rounds)
    for ia, ib in zip(a.images, b.images):
        assert torch.equal(ia, ib)
