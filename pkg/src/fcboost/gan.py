"""Per-category generator triple and unconditional GAN pre-training.

Each category owns a (mapping, synthesis, encoder) triple. Mapping and
synthesis are pre-trained unconditionally on that category's images with a
non-saturating loss plus R1 gradient penalty, then frozen; FCBoost training
only ever touches the encoder.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import load_checkpoint, load_module, save_module, save_sidecar
from .networks import W_DIM, ImageDiscriminator, MappingNetwork, OutfitEncoder, SynthesisNetwork
from .specs import Category


class GanConfigError(RuntimeError):
    pass


class TrainingDiverged(RuntimeError):
    pass


def parameter_hash(module: nn.Module) -> str:
    """Stable hash over all parameters and buffers; used by freeze audits."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def set_requires_grad(module: nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


class CategoryGenerator:
    """Frozen-after-pretraining (f, g) pair for one category."""

    def __init__(self, category: Category, resolution: int, w_dim: int = W_DIM, cmax: int = 96):
        self.category = Category(category)
        self.resolution = resolution
        self.w_dim = w_dim
        self.cmax = cmax
        self.mapping = MappingNetwork(w_dim)
        self.synthesis = SynthesisNetwork(resolution, w_dim, cmax)
        self.frozen = False

    def freeze(self) -> None:
        self.frozen = True
        self.mapping.eval()
        self.synthesis.eval()
        set_requires_grad(self.mapping, False)
        set_requires_grad(self.synthesis, False)

    def map_latent(self, z: torch.Tensor) -> torch.Tensor:
        return self.mapping(z)

    def synthesize(self, w: torch.Tensor) -> torch.Tensor:
        return self.synthesis(w)

    def random_item(self, z: torch.Tensor) -> torch.Tensor:
        return self.synthesize(self.map_latent(z))

    def _meta(self) -> dict:
        return {
            "category": int(self.category),
            "resolution": self.resolution,
            "w_dim": self.w_dim,
            "cmax": self.cmax,
        }

    def save(self, directory: str | Path, config: dict | None = None) -> Path:
        directory = Path(directory)
        meta = self._meta()
        save_module(directory / f"mapping_{self.category.name.lower()}.ckpt", "mapping", self.mapping, meta)
        path = save_module(directory / f"synthesis_{self.category.name.lower()}.ckpt", "synthesis", self.synthesis, meta)
        if config is not None:
            save_sidecar(path, config)
        return path

    @classmethod
    def load(cls, directory: str | Path, category: Category) -> "CategoryGenerator":
        directory = Path(directory)
        name = Category(category).name.lower()
        header, _ = load_checkpoint(directory / f"mapping_{name}.ckpt")
        meta = header["meta"]
        gen = cls(Category(category), meta["resolution"], meta["w_dim"], meta["cmax"])
        load_module(directory / f"mapping_{name}.ckpt", "mapping", gen.mapping)
        load_module(directory / f"synthesis_{name}.ckpt", "synthesis", gen.synthesis)
        gen.freeze()
        return gen


def make_encoder(resolution: int, w_dim: int = W_DIM) -> OutfitEncoder:
    return OutfitEncoder(resolution, in_channels=12, w_dim=w_dim)


@dataclass
class GanPretrainConfig:
    iterations: int = 3000
    batch_size: int = 16
    # lr above 1e-3 or a weak R1 penalty lets the discriminator's early
    # "background fraction" signal slingshot the generator into full tanh
    # saturation, a dead zone it cannot leave; these defaults hold all four
    # categories at the d~1.38/g~0.71 equilibrium through a full run
    lr: float = 1e-3
    betas: tuple[float, float] = (0.0, 0.99)
    r1_weight: float = 10.0
    mapping_lr_mult: float = 0.01
    seed: int = 0
    cmax: int = 96
    log_interval: int = 200
    collapse_patience: int = 1000  # abort if D loss pins at ~0 this long
    collapse_eps: float = 1e-4


def pretrain_category_gan(
    images: np.ndarray,
    category: Category,
    resolution: int,
    config: GanPretrainConfig = GanPretrainConfig(),
) -> tuple[CategoryGenerator, list[dict]]:
    """Non-saturating GAN training of (f, g) on one category's image set.

    `images` is (N, H, W, 3) in [-1, 1]. Returns the generator (not yet
    frozen) and a metrics log.
    """
    if images.shape[1] != resolution:
        raise GanConfigError(f"images are {images.shape[1]}px but resolution={resolution}")
    device = torch.device("cpu")
    torch.manual_seed(config.seed)
    gen = CategoryGenerator(category, resolution, cmax=config.cmax)
    disc = ImageDiscriminator(resolution)

    real_all = torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2))).float()
    # the mapping trains 100x slower than synthesis (standard style-based
    # GAN practice); at the full rate it outruns the synthesis network and
    # destabilizes early training
    opt_g = torch.optim.Adam(
        [
            {"params": list(gen.mapping.parameters()), "lr": config.lr * config.mapping_lr_mult},
            {"params": list(gen.synthesis.parameters())},
        ],
        lr=config.lr, betas=config.betas,
    )
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr, betas=config.betas)
    rng = torch.Generator(device).manual_seed(config.seed)

    log: list[dict] = []
    collapse_run = 0
    for it in range(config.iterations):
        idx = torch.randint(0, real_all.shape[0], (config.batch_size,), generator=rng)
        real = real_all[idx].requires_grad_(True)
        z = torch.randn(config.batch_size, gen.w_dim, generator=rng)
        fake = gen.random_item(z)

        # discriminator: non-saturating logistic + R1 on reals
        d_real = disc(real)
        d_fake = disc(fake.detach())
        d_loss = F.softplus(-d_real).mean() + F.softplus(d_fake).mean()
        grad = torch.autograd.grad(d_real.sum(), real, create_graph=True)[0]
        r1 = grad.pow(2).sum(dim=(1, 2, 3)).mean()
        opt_d.zero_grad(set_to_none=True)
        (d_loss + 0.5 * config.r1_weight * r1).backward()
        opt_d.step()

        # generator
        g_loss = F.softplus(-disc(fake)).mean()
        opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        opt_g.step()

        collapse_run = collapse_run + 1 if d_loss.item() < config.collapse_eps else 0
        if collapse_run >= config.collapse_patience:
            raise TrainingDiverged(
                f"discriminator loss pinned at 0 for {collapse_run} steps (category {category.name})"
            )
        if (it + 1) % config.log_interval == 0 or it == config.iterations - 1:
            log.append({"iteration": it + 1, "d_loss": d_loss.item(), "g_loss": g_loss.item(), "r1": r1.item()})
    return gen, log
