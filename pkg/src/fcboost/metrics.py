"""Evaluation machinery: perceptual distance, Frechet distance over learned
features, diversity measurement, fill-in-the-blank best-times ranking, and
oracle-based scoring of completed outfits.

The perceptual distance reuses the booster's conv stack with per-layer unit
normalization; the Frechet feature extractor is a small category classifier
trained once on the synthetic dataset. Both keep the whole evaluation free of
external pre-trained networks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .networks import BoosterBackbone, CategoryClassifier, W_DIM
from .render import BlankImageError, estimate_spec
from .specs import CATEGORY_ORDER, CompatibilityRule, oracle_score

__all__ = [
    "PerceptualDistance",
    "FeatureStats",
    "feature_stats",
    "merge_stats",
    "fid",
    "FidNumericError",
    "diversity_eval",
    "MethodRun",
    "f2bt",
    "oracle_outfit_score",
    "train_classifier",
    "BlankImageError",
]


class PerceptualDistance:
    """Multi-layer feature distance with per-layer unit normalization.

    Symmetric, non-negative, zero on identical inputs. Differentiable, so it
    doubles as the distance inside the diversity objective.
    """

    def __init__(self, backbone: BoosterBackbone):
        self.backbone = backbone

    def __call__(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        squeeze = a.dim() == 3
        if squeeze:
            a, b = a[None], b[None]
        if a.shape != b.shape:
            raise ValueError(f"resolution/shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
        taps_a = self.backbone.taps(a)
        taps_b = self.backbone.taps(b)
        total = None
        for fa, fb in zip(taps_a, taps_b):
            na = fa * torch.rsqrt(fa.pow(2).sum(dim=1, keepdim=True) + 1e-10)
            nb = fb * torch.rsqrt(fb.pow(2).sum(dim=1, keepdim=True) + 1e-10)
            # sum squared differences over the unit-normalized channel axis,
            # average spatially, then take the root. The root keeps the
            # gradient O(1) as two images approach each other; with a squared
            # form the diversity objective's pull vanishes exactly at
            # collapse, making collapse an absorbing state during training.
            sq = (na - nb).pow(2).sum(dim=1).mean(dim=(1, 2))
            # the 1e-12 floor keeps the root differentiable at zero; subtract
            # its own root so identical inputs still measure exactly 0.0
            layer = (sq + 1e-12).sqrt() - 1e-6
            total = layer if total is None else total + layer
        total = total / len(taps_a)
        return total[0] if squeeze else total


@dataclass(frozen=True)
class FeatureStats:
    mu: np.ndarray
    sigma: np.ndarray  # population covariance, symmetrized
    count: int


def feature_stats(images: torch.Tensor, extractor) -> FeatureStats:
    """Empirical mean/covariance of extractor features over an image batch."""
    if images.shape[0] < 2:
        raise ValueError("feature statistics need at least 2 images")
    with torch.no_grad():
        feats = extractor(images).numpy().astype(np.float64)
    mu = feats.mean(axis=0)
    centered = feats - mu
    sigma = centered.T @ centered / feats.shape[0]
    sigma = (sigma + sigma.T) / 2.0
    return FeatureStats(mu=mu, sigma=sigma, count=feats.shape[0])


def merge_stats(a: FeatureStats, b: FeatureStats) -> FeatureStats:
    """Exact pooled statistics of the concatenated underlying samples."""
    n = a.count + b.count
    mu = (a.count * a.mu + b.count * b.mu) / n
    da, db = a.mu - mu, b.mu - mu
    sigma = (
        a.count * (a.sigma + np.outer(da, da)) + b.count * (b.sigma + np.outer(db, db))
    ) / n
    return FeatureStats(mu=mu, sigma=(sigma + sigma.T) / 2.0, count=n)


class FidNumericError(RuntimeError):
    pass


_EIG_TOL = 1e-6


def _sqrtm_psd(mat: np.ndarray, label: str) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals.min() < -_EIG_TOL * scale:
        raise FidNumericError(
            f"{label} is not PSD: min eigenvalue {vals.min():.3e}, max {vals.max():.3e}"
        )
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def fid(stats_a: FeatureStats, stats_b: FeatureStats) -> float:
    """Frechet distance between the two Gaussian feature fits."""
    if stats_a.mu.shape != stats_b.mu.shape:
        raise ValueError("feature dimensionality mismatch")
    diff = stats_a.mu - stats_b.mu
    root_a = _sqrtm_psd(stats_a.sigma, "sigma_a")
    inner = root_a @ stats_b.sigma @ root_a
    inner = (inner + inner.T) / 2.0
    vals = np.linalg.eigvalsh(inner)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals.min() < -_EIG_TOL * scale:
        raise FidNumericError(
            f"sqrt(sigma_a sigma_b) failed: min eigenvalue {vals.min():.3e}, "
            f"condition ~{np.abs(vals).max() / max(np.abs(vals).min(), 1e-300):.3e}"
        )
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    value = float(diff @ diff + np.trace(stats_a.sigma) + np.trace(stats_b.sigma) - 2.0 * tr_sqrt)
    return max(value, 0.0)


def oracle_outfit_score(
    images: np.ndarray, rule: CompatibilityRule = CompatibilityRule()
) -> float:
    """Estimate each item's color, then apply the analytic compatibility score.

    `images` is (4, H, W, 3) in [-1, 1], fixed category order.
    """
    if len(images) != len(CATEGORY_ORDER):
        raise ValueError(f"expected {len(CATEGORY_ORDER)} item images, got {len(images)}")
    hues, lights = [], []
    for idx, (img, cat) in enumerate(zip(images, CATEGORY_ORDER)):
        try:
            est = estimate_spec(np.asarray(img), cat)
        except BlankImageError as exc:
            raise BlankImageError(f"item {idx} ({cat.name.lower()}): {exc}") from exc
        hues.append(est.hue)
        lights.append(est.lightness)
    score, _ = oracle_score(hues, lights, rule)
    return score


@dataclass(frozen=True)
class MethodRun:
    """One method's completed outfits over the shared test cases."""

    name: str
    outfits: list  # list of (4, H, W, 3) arrays, aligned across methods


def f2bt(runs: list[MethodRun], scorer=oracle_outfit_score) -> dict[str, float]:
    """Win percentage per method: best completed-outfit score per test case.

    Ties split fractionally among the tied methods; percentages sum to 100.
    """
    if len(runs) < 1:
        raise ValueError("f2bt needs at least one method")
    n_cases = len(runs[0].outfits)
    if any(len(r.outfits) != n_cases for r in runs):
        raise ValueError("method runs are misaligned: unequal test-case counts")
    wins = {r.name: 0.0 for r in runs}
    for case in range(n_cases):
        scores = [scorer(r.outfits[case]) for r in runs]
        best = max(scores)
        tied = [r.name for r, s in zip(runs, scores) if s == best]
        for name in tied:
            wins[name] += 1.0 / len(tied)
    return {name: 100.0 * w / n_cases for name, w in wins.items()}


@torch.no_grad()
def diversity_eval(
    complete_fn,
    given_images: torch.Tensor,
    given_masks: torch.Tensor,
    k: int,
    distance,
    seed: int = 0,
) -> dict[str, float]:
    """Mean pairwise perceptual distance between K completions per given-set.

    `complete_fn(given_images, given_mask, z) -> (B, K, 4, 3, H, W)` images of
    the final boosting round. Reported per n_given setting and overall,
    mirroring the 1/2/3/Avg. table layout.
    """
    if k < 2:
        raise ValueError("diversity evaluation needs K >= 2")
    rng = torch.Generator().manual_seed(seed)
    z = torch.randn(given_images.shape[0], k, W_DIM, generator=rng)
    completed = complete_fn(given_images, given_masks, z)

    per_setting: dict[int, list[float]] = {1: [], 2: [], 3: []}
    for s in range(given_images.shape[0]):
        n_given = int(given_masks[s].sum())
        target_idx = torch.nonzero(~given_masks[s], as_tuple=False).squeeze(-1)
        items = completed[s][:, target_idx]  # (K, n_targets, 3, H, W)
        dists = []
        for a in range(k):
            for b in range(a + 1, k):
                dists.append(distance(items[a], items[b]).mean().item())
        per_setting[n_given].append(float(np.mean(dists)))

    report = {}
    all_vals = []
    for n_given in (1, 2, 3):
        vals = per_setting[n_given]
        report[str(n_given)] = float(np.mean(vals)) if vals else float("nan")
        all_vals.extend(vals)
    report["Avg."] = float(np.mean(all_vals)) if all_vals else float("nan")
    return report


@dataclass
class ClassifierConfig:
    iterations: int = 600
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0


def train_classifier(
    images: np.ndarray, labels: np.ndarray, resolution: int,
    config: ClassifierConfig = ClassifierConfig(),
) -> CategoryClassifier:
    """Train the category classifier used as the Frechet feature extractor."""
    torch.manual_seed(config.seed)
    model = CategoryClassifier(resolution)
    x = torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2))).float()
    y = torch.from_numpy(np.asarray(labels)).long()
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    rng = torch.Generator().manual_seed(config.seed)
    for _ in range(config.iterations):
        idx = torch.randint(0, x.shape[0], (config.batch_size,), generator=rng)
        loss = F.cross_entropy(model(x[idx]), y[idx])
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
    model.eval()
    return model
