"""Latent-space adversarial losses and the code replay pool.

Real codes come from a mapping network, fake codes from an encoder; the
discriminator scores probabilities in (0, 1). Both loss functions follow
the minimization convention (the paper-style log objectives, negated).
"""

from __future__ import annotations

import torch

from .networks import LatentDiscriminator

PROB_EPS = 1e-6


def disc_score(disc: LatentDiscriminator, w: torch.Tensor) -> torch.Tensor:
    """Probability that w is a real (mapping-network) code; preserves batch order."""
    if not torch.isfinite(w).all():
        raise ValueError("non-finite latent code")
    return disc(w)


def _clamped_log(p: torch.Tensor) -> torch.Tensor:
    return torch.log(p.clamp(PROB_EPS, 1.0 - PROB_EPS))


def disc_loss(disc: LatentDiscriminator, real_ws: torch.Tensor, fake_ws: torch.Tensor) -> torch.Tensor:
    """-(E[log D(real)] + E[log(1 - D(fake))]); fakes must already be detached."""
    if real_ws.numel() == 0 or fake_ws.numel() == 0:
        raise ValueError("disc_loss needs non-empty real and fake batches")
    p_real = disc(real_ws)
    p_fake = disc(fake_ws)
    return -(_clamped_log(p_real).mean() + _clamped_log(1.0 - p_fake).mean())


def adv_loss(disc: LatentDiscriminator, fake_ws: torch.Tensor) -> torch.Tensor:
    """Non-saturating encoder loss: -E[log D(fake)], gradient flows to the encoder."""
    if fake_ws.numel() == 0:
        raise ValueError("adv_loss needs a non-empty fake batch")
    return -_clamped_log(disc(fake_ws)).mean()


class CodePool:
    """Replay buffer of past latent codes (classic image-pool policy).

    Each fresh code is returned as-is with probability 0.5 once the pool is
    full; otherwise it is swapped with a random stored code. The pool only
    ever returns codes it has seen.
    """

    def __init__(self, capacity: int = 200):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.codes: list[torch.Tensor] = []

    def __len__(self) -> int:
        return len(self.codes)

    def sample_and_insert(self, fresh: torch.Tensor, rng: torch.Generator) -> torch.Tensor:
        """Mix a batch of fresh codes with stored ones; batch size is preserved."""
        out = []
        for code in fresh.detach():
            if len(self.codes) < self.capacity:
                self.codes.append(code.clone())
                out.append(code)
            elif torch.rand((), generator=rng).item() < 0.5:
                out.append(code)
            else:
                idx = int(torch.randint(0, self.capacity, (), generator=rng).item())
                out.append(self.codes[idx].clone())
                self.codes[idx] = code.clone()
        return torch.stack(out)

    def state(self) -> torch.Tensor | None:
        return torch.stack(self.codes) if self.codes else None

    def load_state(self, codes: torch.Tensor | None) -> None:
        self.codes = [c.clone() for c in codes] if codes is not None else []


def pool_sample_and_insert(pool: CodePool, fresh_codes: torch.Tensor, rng: torch.Generator) -> torch.Tensor:
    return pool.sample_and_insert(fresh_codes, rng)
