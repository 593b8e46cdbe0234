import numpy as np
import pytest
import torch

from fcboost.metrics import (
    FeatureStats,
    FidNumericError,
    MethodRun,
    PerceptualDistance,
    diversity_eval,
    f2bt,
    feature_stats,
    fid,
    merge_stats,
    oracle_outfit_score,
)
from fcboost.networks import BoosterBackbone
from fcboost.render import render_item
from fcboost.specs import CATEGORY_ORDER, oracle_score, sample_compatible_outfit


@pytest.fixture(scope="module")
def distance():
    torch.manual_seed(0)
    return PerceptualDistance(BoosterBackbone(32))


def test_perceptual_distance_properties(distance):
    g = torch.Generator().manual_seed(1)
    a = torch.randn(3, 32, 32, generator=g)
    b = torch.randn(3, 32, 32, generator=g)
    assert distance(a, a).item() == pytest.approx(0.0, abs=1e-8)
    assert distance(a, b).item() > 0
    assert distance(a, b).item() == pytest.approx(distance(b, a).item(), abs=1e-7)
    batched = distance(torch.stack([a, a]), torch.stack([b, a]))
    assert batched.shape == (2,)
    assert batched[0].item() == pytest.approx(distance(a, b).item(), rel=1e-5)
    with pytest.raises(ValueError):
        distance(a, torch.randn(3, 16, 16))


def test_feature_stats_and_merge_exact():
    rng = np.random.default_rng(0)
    feats = rng.standard_normal((20, 5)).astype(np.float32)
    extractor = lambda x: torch.from_numpy(feats[: x.shape[0]])
    imgs = torch.zeros(20, 3, 8, 8)
    full = feature_stats(imgs, lambda x: torch.from_numpy(feats))
    a = feature_stats(imgs[:8], lambda x: torch.from_numpy(feats[:8]))
    b = feature_stats(imgs[8:], lambda x: torch.from_numpy(feats[8:]))
    merged = merge_stats(a, b)
    assert merged.count == 20
    assert np.allclose(merged.mu, full.mu, atol=1e-10)
    assert np.allclose(merged.sigma, full.sigma, atol=1e-10)
    with pytest.raises(ValueError):
        feature_stats(imgs[:1], lambda x: torch.from_numpy(feats[:1]))


def eye_stats(mu, scale=1.0, d=4):
    return FeatureStats(mu=np.asarray(mu, dtype=np.float64), sigma=scale * np.eye(d), count=10)


def test_fid_closed_form_cases():
    zero = eye_stats(np.zeros(4))
    assert fid(zero, zero) == pytest.approx(0.0, abs=1e-6)
    # unit mean shift, identical covariances -> squared distance 1
    shifted = eye_stats([1.0, 0.0, 0.0, 0.0])
    assert fid(zero, shifted) == pytest.approx(1.0, abs=1e-6)
    # mean shift of norm sqrt(2) -> 2
    diag = eye_stats([1.0, 1.0, 0.0, 0.0])
    assert fid(zero, diag) == pytest.approx(2.0, abs=1e-6)
    # covariance-only gap: tr(I) + tr(4I) - 2 tr(2I) = d
    wide = eye_stats(np.zeros(4), scale=4.0)
    assert fid(zero, wide) == pytest.approx(4.0, abs=1e-6)


def test_fid_rejects_bad_inputs():
    zero = eye_stats(np.zeros(4))
    with pytest.raises(ValueError):
        fid(zero, eye_stats(np.zeros(3), d=3))
    broken = FeatureStats(mu=np.zeros(4), sigma=-np.eye(4), count=10)
    with pytest.raises(FidNumericError):
        fid(broken, zero)


def test_f2bt_matches_brute_force():
    # scores are the arrays' first entries; method A wins cases 0 and 2, tie on 1
    outfits_a = [np.full((4, 8, 8, 3), v) for v in (0.9, 0.5, 0.8)]
    outfits_b = [np.full((4, 8, 8, 3), v) for v in (0.1, 0.5, 0.2)]
    scorer = lambda imgs: float(imgs[0, 0, 0, 0])
    pct = f2bt([MethodRun("a", outfits_a), MethodRun("b", outfits_b)], scorer=scorer)
    assert pct["a"] == pytest.approx(100.0 * 2.5 / 3)
    assert pct["b"] == pytest.approx(100.0 * 0.5 / 3)
    assert pct["a"] + pct["b"] == pytest.approx(100.0)


def test_f2bt_validates_alignment():
    run = MethodRun("a", [np.zeros((4, 8, 8, 3))])
    bad = MethodRun("b", [])
    with pytest.raises(ValueError):
        f2bt([run, bad])
    with pytest.raises(ValueError):
        f2bt([])


def test_oracle_outfit_score_tracks_spec_score():
    rng = np.random.default_rng(3)
    for _ in range(5):
        spec = sample_compatible_outfit(rng)
        imgs = np.stack([render_item(item, 32) for item in spec.items])
        expected, _ = oracle_score(spec.hues, spec.lightnesses)
        assert oracle_outfit_score(imgs) == pytest.approx(expected, abs=0.08)


def test_oracle_outfit_score_validates_count():
    with pytest.raises(ValueError):
        oracle_outfit_score(np.zeros((3, 8, 8, 3)))


def test_diversity_eval_reports_settings(distance):
    n, k = 6, 3
    g = torch.Generator().manual_seed(0)
    given = torch.randn(n, 4, 3, 32, 32, generator=g)
    masks = torch.zeros(n, 4, dtype=torch.bool)
    for s in range(n):
        masks[s, : (s % 3) + 1] = True

    def complete_fn(given_images, given_masks, z):
        # deterministic per-code completions so the distance is nonzero
        out = given_images[:, None].expand(-1, k, -1, -1, -1, -1).clone()
        out += z[:, :, :1, None, None, None].expand_as(out) * 0.01
        return out

    report = diversity_eval(complete_fn, given, masks, k, distance, seed=0)
    assert set(report) == {"1", "2", "3", "Avg."}
    assert all(v >= 0 for v in report.values())
    again = diversity_eval(complete_fn, given, masks, k, distance, seed=0)
    assert report == again
    with pytest.raises(ValueError):
        diversity_eval(complete_fn, given, masks, 1, distance)
