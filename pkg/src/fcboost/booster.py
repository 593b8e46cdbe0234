"""Type-aware fashion compatibility booster and the boosting hinge objective.

The booster embeds item images, projects the embedding with a matrix chosen
by the unordered category pair, and scores a pair by Euclidean distance in
that projected space (smaller = more compatible). It is pre-trained on
compatible-vs-random pairs and then frozen; the boosting loss compares the
current round's pair distances against the previous round's (stop-gradient).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import load_checkpoint, load_module, save_module, save_sidecar
from .gan import TrainingDiverged, set_requires_grad
from .networks import BoosterBackbone
from .specs import CATEGORY_ORDER, NUM_CATEGORIES, Category

# canonical unordered category pairs, 6 for N=4
PAIR_TYPES: tuple[tuple[int, int], ...] = tuple(
    (i, j) for i in range(NUM_CATEGORIES) for j in range(i + 1, NUM_CATEGORIES)
)
_PAIR_INDEX = {pair: idx for idx, pair in enumerate(PAIR_TYPES)}


def pair_type_index(cat_a: Category, cat_b: Category) -> int:
    a, b = int(cat_a), int(cat_b)
    if a == b:
        raise ValueError(f"pair distance needs two distinct categories, got {cat_a} twice")
    return _PAIR_INDEX[(min(a, b), max(a, b))]


class BoosterModel(nn.Module):
    """Feature extractor plus one projection per unordered category pair."""

    def __init__(self, resolution: int, feature_dim: int = 128, embed_dim: int = 32):
        super().__init__()
        self.resolution = resolution
        self.feature_dim = feature_dim
        self.embed_dim = embed_dim
        self.backbone = BoosterBackbone(resolution, feature_dim)
        self.projections = nn.ModuleList(
            nn.Linear(feature_dim, embed_dim, bias=False) for _ in PAIR_TYPES
        )
        self.frozen = False

    def freeze(self) -> None:
        self.frozen = True
        self.eval()
        set_requires_grad(self, False)

    def extract_features(self, images: torch.Tensor) -> torch.Tensor:
        return self.backbone(images)

    def project(self, features: torch.Tensor, pair_idx: int) -> torch.Tensor:
        return self.projections[pair_idx](features)

    def _meta(self) -> dict:
        return {
            "resolution": self.resolution,
            "feature_dim": self.feature_dim,
            "embed_dim": self.embed_dim,
        }

    def save(self, path: str | Path, config: dict | None = None) -> Path:
        out = save_module(path, "booster", self, self._meta())
        sidecar = {"pair_types": [list(p) for p in PAIR_TYPES]}
        if config is not None:
            sidecar["config"] = config
        save_sidecar(out, sidecar)
        return out

    @classmethod
    def load(cls, path: str | Path) -> "BoosterModel":
        header, _ = load_checkpoint(path)
        meta = header["meta"]
        model = cls(meta["resolution"], meta["feature_dim"], meta["embed_dim"])
        load_module(path, "booster", model)
        model.freeze()
        return model


def pair_distance(
    booster: BoosterModel,
    img_a: torch.Tensor,
    cat_a: Category,
    img_b: torch.Tensor,
    cat_b: Category,
) -> torch.Tensor:
    """Euclidean distance between type-aware projections; symmetric in (a, b)."""
    idx = pair_type_index(cat_a, cat_b)
    feats = booster.extract_features(torch.stack([img_a, img_b]))
    emb = booster.project(feats, idx)
    return torch.linalg.vector_norm(emb[0] - emb[1])


def _pairwise_embed_distance(ea: torch.Tensor, eb: torch.Tensor) -> torch.Tensor:
    # sqrt is non-differentiable at 0; the epsilon keeps hinge gradients finite
    return torch.sqrt((ea - eb).pow(2).sum(dim=-1) + 1e-12)


def fcb_loss(
    booster: BoosterModel,
    outfits_t: torch.Tensor,
    outfits_t_minus_1: torch.Tensor,
    alpha: float,
) -> torch.Tensor:
    """Boosting hinge over all ordered pairs i != j (Euclidean, type-aware space).

    Inputs are (B, 4, 3, H, W) completed outfits for the current and previous
    round. The previous round is stop-gradiented; the booster is frozen, so
    gradients reach only the current round's images.
    """
    if outfits_t.shape != outfits_t_minus_1.shape:
        raise ValueError(
            f"round shapes differ: {tuple(outfits_t.shape)} vs {tuple(outfits_t_minus_1.shape)}"
        )
    b, n = outfits_t.shape[:2]
    if n != NUM_CATEGORIES:
        raise ValueError(f"expected {NUM_CATEGORIES} items per outfit, got {n}")
    feats_t = booster.extract_features(outfits_t.reshape(b * n, *outfits_t.shape[2:])).reshape(b, n, -1)
    prev = outfits_t_minus_1.detach()
    feats_p = booster.extract_features(prev.reshape(b * n, *prev.shape[2:])).reshape(b, n, -1)

    terms = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            idx = pair_type_index(CATEGORY_ORDER[i], CATEGORY_ORDER[j])
            e_ti = booster.project(feats_t[:, i], idx)
            e_tj = booster.project(feats_t[:, j], idx)
            e_pj = booster.project(feats_p[:, j], idx)
            d_cur = _pairwise_embed_distance(e_ti, e_tj)
            d_cross = _pairwise_embed_distance(e_ti, e_pj)
            terms.append(F.relu(d_cur - d_cross + alpha))
    return torch.stack(terms).mean()


@dataclass
class BoosterPretrainConfig:
    iterations: int = 2000
    batch_size: int = 32
    lr: float = 1e-3
    betas: tuple[float, float] = (0.0, 0.99)
    margin: float = 0.2
    seed: int = 0
    log_interval: int = 200


def pretrain_booster(
    outfit_images: np.ndarray,
    resolution: int,
    config: BoosterPretrainConfig = BoosterPretrainConfig(),
) -> tuple[BoosterModel, list[dict]]:
    """Pairwise-hinge pre-training on compatible pairs vs cross-outfit swaps.

    `outfit_images` is (N_outfits, 4, H, W, 3) in [-1, 1], category order.
    Positives are pairs within one compatible outfit; negatives replace the
    second item with the same-category item of another outfit.
    """
    torch.manual_seed(config.seed)
    model = BoosterModel(resolution)
    data = torch.from_numpy(
        np.ascontiguousarray(outfit_images.transpose(0, 1, 4, 2, 3))
    ).float()
    n_outfits = data.shape[0]
    opt = torch.optim.Adam(model.parameters(), lr=config.lr, betas=config.betas)
    rng = torch.Generator().manual_seed(config.seed)

    log: list[dict] = []
    for it in range(config.iterations):
        out_idx = torch.randint(0, n_outfits, (config.batch_size,), generator=rng)
        other_idx = torch.randint(0, n_outfits, (config.batch_size,), generator=rng)
        cat_i = torch.randint(0, NUM_CATEGORIES, (config.batch_size,), generator=rng)
        cat_j = (cat_i + 1 + torch.randint(0, NUM_CATEGORIES - 1, (config.batch_size,), generator=rng)) % NUM_CATEGORIES

        anchors = data[out_idx, cat_i]
        positives = data[out_idx, cat_j]
        negatives = data[other_idx, cat_j]
        feats = model.extract_features(torch.cat([anchors, positives, negatives]))
        fa, fp, fn = feats.chunk(3)

        losses = []
        for b in range(config.batch_size):
            idx = pair_type_index(Category(int(cat_i[b])), Category(int(cat_j[b])))
            ea = model.project(fa[b], idx)
            d_pos = _pairwise_embed_distance(ea, model.project(fp[b], idx))
            d_neg = _pairwise_embed_distance(ea, model.project(fn[b], idx))
            losses.append(F.relu(d_pos - d_neg + config.margin))
        loss = torch.stack(losses).mean()
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"booster loss became non-finite at iteration {it}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if (it + 1) % config.log_interval == 0 or it == config.iterations - 1:
            log.append({"iteration": it + 1, "loss": loss.item()})
    return model, log
