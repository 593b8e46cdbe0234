import numpy as np
import pytest
import torch

from fcboost.booster import (
    PAIR_TYPES,
    BoosterModel,
    BoosterPretrainConfig,
    fcb_loss,
    pair_distance,
    pair_type_index,
    pretrain_booster,
)
from fcboost.gan import parameter_hash
from fcboost.specs import CATEGORY_ORDER, Category


@pytest.fixture(scope="module")
def booster():
    torch.manual_seed(0)
    model = BoosterModel(resolution=32)
    model.freeze()
    return model


def test_pair_types_cover_unordered_pairs():
    assert len(PAIR_TYPES) == 6
    assert pair_type_index(Category.UPPER, Category.BAG) == pair_type_index(Category.BAG, Category.UPPER)
    indices = {pair_type_index(a, b) for a in CATEGORY_ORDER for b in CATEGORY_ORDER if a != b}
    assert indices == set(range(6))
    with pytest.raises(ValueError):
        pair_type_index(Category.LOWER, Category.LOWER)


def test_pair_distance_symmetric_nonnegative(booster):
    g = torch.Generator().manual_seed(1)
    a = torch.randn(3, 32, 32, generator=g)
    b = torch.randn(3, 32, 32, generator=g)
    d_ab = pair_distance(booster, a, Category.UPPER, b, Category.SHOES)
    d_ba = pair_distance(booster, b, Category.SHOES, a, Category.UPPER)
    assert d_ab.item() == pytest.approx(d_ba.item(), abs=1e-6)
    assert d_ab.item() >= 0.0
    d_self = pair_distance(booster, a, Category.UPPER, a, Category.SHOES)
    assert d_self.item() == pytest.approx(0.0, abs=1e-5)


def test_fcb_loss_shape_mismatch(booster):
    with pytest.raises(ValueError):
        fcb_loss(booster, torch.zeros(1, 4, 3, 32, 32), torch.zeros(2, 4, 3, 32, 32), 0.2)
    with pytest.raises(ValueError):
        fcb_loss(booster, torch.zeros(1, 3, 3, 32, 32), torch.zeros(1, 3, 3, 32, 32), 0.2)


def test_fcb_loss_identical_rounds_equal_margin(booster):
    g = torch.Generator().manual_seed(2)
    outfits = torch.randn(2, 4, 3, 32, 32, generator=g)
    # d_cur == d_cross when the rounds coincide, so every hinge term is alpha
    loss = fcb_loss(booster, outfits, outfits.clone(), alpha=0.2)
    assert loss.item() == pytest.approx(0.2, abs=1e-6)


def brute_force_fcb(booster, cur, prev, alpha):
    b = cur.shape[0]
    terms = []
    for s in range(b):
        for i in range(4):
            for j in range(4):
                if i == j:
                    continue
                idx = pair_type_index(CATEGORY_ORDER[i], CATEGORY_ORDER[j])
                with torch.no_grad():
                    e_ti = booster.project(booster.extract_features(cur[s, i][None]), idx)[0]
                    e_tj = booster.project(booster.extract_features(cur[s, j][None]), idx)[0]
                    e_pj = booster.project(booster.extract_features(prev[s, j][None]), idx)[0]
                d_cur = float(torch.sqrt((e_ti - e_tj).pow(2).sum() + 1e-12))
                d_cross = float(torch.sqrt((e_ti - e_pj).pow(2).sum() + 1e-12))
                terms.append(max(0.0, d_cur - d_cross + alpha))
    return float(np.mean(terms))


def test_fcb_loss_matches_brute_force(booster):
    g = torch.Generator().manual_seed(3)
    cur = torch.randn(2, 4, 3, 32, 32, generator=g)
    prev = torch.randn(2, 4, 3, 32, 32, generator=g)
    fast = fcb_loss(booster, cur, prev, alpha=0.2).item()
    slow = brute_force_fcb(booster, cur, prev, alpha=0.2)
    assert fast == pytest.approx(slow, abs=1e-5)


def test_fcb_loss_stop_gradient(booster):
    g = torch.Generator().manual_seed(4)
    cur = torch.randn(1, 4, 3, 32, 32, generator=g, requires_grad=True)
    prev = torch.randn(1, 4, 3, 32, 32, generator=g, requires_grad=True)
    loss = fcb_loss(booster, cur, prev, alpha=0.5)
    loss.backward()
    assert cur.grad is not None and cur.grad.abs().sum() > 0
    assert prev.grad is None
    assert all(p.grad is None for p in booster.parameters())


def test_booster_save_load_roundtrip(tmp_path, booster):
    path = booster.save(tmp_path / "b.ckpt", config={"x": 1})
    loaded = BoosterModel.load(path)
    assert loaded.frozen
    assert parameter_hash(loaded) == parameter_hash(booster)
    assert (tmp_path / "b.ckpt.json").is_file()


def test_pretrain_booster_deterministic():
    rng = np.random.default_rng(0)
    outfits = rng.uniform(-1, 1, size=(6, 4, 32, 32, 3)).astype(np.float32)
    cfg = BoosterPretrainConfig(iterations=3, batch_size=4, log_interval=1, seed=5)
    m1, log1 = pretrain_booster(outfits, 32, cfg)
    m2, log2 = pretrain_booster(outfits, 32, cfg)
    assert parameter_hash(m1) == parameter_hash(m2)
    assert log1 == log2
    assert len(log1) == 3
