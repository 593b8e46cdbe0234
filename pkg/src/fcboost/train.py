"""FCBoost training loop: masking, the boosting recurrence, loss assembly,
and alternating discriminator/encoder optimization.

Pre-trained pieces (mapping, synthesis, booster) stay frozen; only the four
encoders and four latent discriminators learn. The whole loop is driven by a
single checkpointed torch RNG, so runs are bit-reproducible and resumable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import metrics as metrics_mod
from .booster import BoosterModel, fcb_loss
from .checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_module_arrays,
    module_arrays,
    save_checkpoint,
    save_sidecar,
)
from .dataset import DatasetManifest, load_outfit_images
from .gan import CategoryGenerator, make_encoder, parameter_hash, set_requires_grad
from .latent_disc import CodePool, adv_loss, disc_loss
from .networks import LatentDiscriminator, W_DIM
from .specs import CATEGORY_ORDER, NUM_CATEGORIES, Category


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    data_root: str = ""
    pretrained_dir: str = ""
    run_dir: str = ""
    resolution: int = 64
    k: int = 2  # latent codes per given-set
    t_rounds: int = 2  # boosting rounds T
    alpha: float = 0.2
    lambda_div: float = 10.0
    lambda_fcb: float = 20.0
    lr: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.99
    batch_size: int = 4
    iterations: int = 10000
    seed: int = 0
    pool_capacity: int = 200
    n_given_choices: tuple[int, ...] = (1, 2, 3)
    log_interval: int = 50
    checkpoint_interval: int = 500
    probe_size: int = 16
    probe_k: int = 2

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2 (the diversity loss needs code pairs)")
        if self.t_rounds < 1:
            raise ValueError("t_rounds must be >= 1")
        if any(n < 1 or n > 3 for n in self.n_given_choices):
            raise ValueError("n_given values must lie in {1, 2, 3}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_given_choices"] = list(self.n_given_choices)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "n_given_choices" in d:
            d["n_given_choices"] = tuple(d["n_given_choices"])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def config_hash(self) -> str:
        d = self.to_dict()
        for k in ("data_root", "pretrained_dir", "run_dir", "log_interval",
                  "checkpoint_interval", "probe_size", "probe_k"):
            d.pop(k, None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def mask_outfit(rng: torch.Generator, n_given: int) -> torch.Tensor:
    """Boolean (4,) mask, True where the category is given."""
    if not 1 <= n_given <= 3:
        raise ValueError(f"n_given must be in {{1, 2, 3}}, got {n_given}")
    mask = torch.zeros(NUM_CATEGORIES, dtype=torch.bool)
    mask[torch.randperm(NUM_CATEGORIES, generator=rng)[:n_given]] = True
    return mask


@dataclass
class RoundOutputs:
    """Completed outfits per boosting round.

    images[t] has shape (B, K, 4, 3, H, W) with given slots copied verbatim;
    codes[t] maps category index -> (flat row indices into B*K, latent codes).
    """

    images: list[torch.Tensor]
    codes: list[dict[int, tuple[torch.Tensor, torch.Tensor]]]
    given_mask: torch.Tensor  # (B, 4) bool

    @property
    def rounds(self) -> int:
        return len(self.images) - 1


class FcbModels:
    """Bundle of frozen generators + booster and the trainable encoders."""

    def __init__(
        self,
        generators: dict[Category, CategoryGenerator],
        encoders: dict[Category, torch.nn.Module],
        booster: BoosterModel,
        resolution: int,
    ):
        self.generators = generators
        self.encoders = encoders
        self.booster = booster
        self.resolution = resolution

    @classmethod
    def create(cls, pretrained_dir: str | Path, resolution: int, seed: int = 0) -> "FcbModels":
        pretrained_dir = Path(pretrained_dir)
        generators = {}
        for cat in CATEGORY_ORDER:
            gen = CategoryGenerator.load(pretrained_dir, cat)
            if gen.resolution != resolution:
                raise TrainError(
                    f"generator for {cat.name} is {gen.resolution}px, config wants {resolution}px"
                )
            generators[cat] = gen
        booster_path = pretrained_dir / "booster.ckpt"
        if not booster_path.is_file():
            raise TrainError(f"missing booster checkpoint: {booster_path}")
        booster = BoosterModel.load(booster_path)
        torch.manual_seed(seed)
        encoders = {cat: make_encoder(resolution) for cat in CATEGORY_ORDER}
        return cls(generators, encoders, booster, resolution)

    def boost_forward(
        self,
        given_images: torch.Tensor,
        given_mask: torch.Tensor,
        z: torch.Tensor,
        t_rounds: int,
    ) -> RoundOutputs:
        """Eq.-style recurrence: random synthesis at round 0, encode-resynthesize after.

        given_images: (B, 4, 3, H, W); given_mask: (B, 4) bool; z: (B, K, w_dim).
        Target slots of round t >= 1 come from g_i(e_i(stack of round t-1)).
        """
        b, k = z.shape[0], z.shape[1]
        flat_mask = given_mask[:, None, :].expand(b, k, NUM_CATEGORIES).reshape(b * k, NUM_CATEGORIES)
        given_flat = given_images[:, None].expand(b, k, *given_images.shape[1:]).reshape(
            b * k, *given_images.shape[1:]
        )
        z_flat = z.reshape(b * k, -1)

        images: list[torch.Tensor] = []
        codes: list[dict[int, tuple[torch.Tensor, torch.Tensor]]] = []

        # round 0: f_i . g_i(z_k) in target slots
        round_imgs = given_flat.clone()
        round_codes: dict[int, tuple[torch.Tensor, torch.Tensor]] = {}
        for i, cat in enumerate(CATEGORY_ORDER):
            rows = torch.nonzero(~flat_mask[:, i], as_tuple=False).squeeze(-1)
            if rows.numel() == 0:
                continue
            gen = self.generators[cat]
            w = gen.map_latent(z_flat[rows])
            round_imgs[rows, i] = gen.synthesize(w)
            round_codes[i] = (rows, w)
        images.append(round_imgs)
        codes.append(round_codes)

        for _ in range(1, t_rounds + 1):
            prev = images[-1]
            stack = prev.reshape(b * k, NUM_CATEGORIES * 3, *prev.shape[-2:])
            round_imgs = given_flat.clone()
            round_codes = {}
            for i, cat in enumerate(CATEGORY_ORDER):
                rows = torch.nonzero(~flat_mask[:, i], as_tuple=False).squeeze(-1)
                if rows.numel() == 0:
                    continue
                w = self.encoders[cat](stack[rows])
                round_imgs[rows, i] = self.generators[cat].synthesize(w)
                round_codes[i] = (rows, w)
            images.append(round_imgs)
            codes.append(round_codes)

        shaped = [img.reshape(b, k, NUM_CATEGORIES, 3, *img.shape[-2:]) for img in images]
        return RoundOutputs(images=shaped, codes=codes, given_mask=given_mask)

    @torch.no_grad()
    def complete(
        self,
        given_images: torch.Tensor,
        given_mask: torch.Tensor,
        z: torch.Tensor,
        t_rounds: int,
    ) -> RoundOutputs:
        return self.boost_forward(given_images, given_mask, z, t_rounds)

    def encoder_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for cat, enc in self.encoders.items():
            for name, arr in module_arrays(enc).items():
                out[f"encoder_{cat.name.lower()}.{name}"] = arr
        return out

    def load_encoder_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for cat, enc in self.encoders.items():
            prefix = f"encoder_{cat.name.lower()}."
            sub = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
            load_module_arrays(enc, sub)


def diversity_loss(round_items: torch.Tensor, distance_fn) -> torch.Tensor:
    """Negative mean pairwise distance across latent codes, per category.

    round_items: (K, C, 3, H, W) — C completions per code for one sample.
    """
    k = round_items.shape[0]
    if k < 2:
        raise ValueError("diversity loss needs K >= 2 completions")
    dists = []
    for a in range(k):
        for bb in range(a + 1, k):
            dists.append(distance_fn(round_items[a], round_items[bb]).mean())
    return -torch.stack(dists).mean()


def total_loss(
    adv: list[torch.Tensor], div: list[torch.Tensor], fcb: list[torch.Tensor], config: TrainConfig
) -> torch.Tensor:
    """Mean over boosting rounds t=1..T of adv + lambda_div*div + lambda_fcb*fcb."""
    if not (len(adv) == len(div) == len(fcb)) or not adv:
        raise ValueError("per-round loss lists must be non-empty and aligned")
    per_round = [
        a + config.lambda_div * d + config.lambda_fcb * f for a, d, f in zip(adv, div, fcb)
    ]
    return torch.stack(per_round).mean()


class TrainState:
    """Mutable training state: encoders, discriminators, optimizers, pools, RNG."""

    def __init__(self, models: FcbModels, config: TrainConfig):
        self.models = models
        self.config = config
        torch.manual_seed(config.seed + 1)
        self.discs = {cat: LatentDiscriminator() for cat in CATEGORY_ORDER}
        enc_params = [p for cat in CATEGORY_ORDER for p in models.encoders[cat].parameters()]
        disc_params = [p for cat in CATEGORY_ORDER for p in self.discs[cat].parameters()]
        betas = (config.beta1, config.beta2)
        self.opt_enc = torch.optim.Adam(enc_params, lr=config.lr, betas=betas)
        self.opt_disc = torch.optim.Adam(disc_params, lr=config.lr, betas=betas)
        self.real_pools = {cat: CodePool(config.pool_capacity) for cat in CATEGORY_ORDER}
        self.fake_pools = {cat: CodePool(config.pool_capacity) for cat in CATEGORY_ORDER}
        self.rng = torch.Generator().manual_seed(config.seed)
        self.iteration = 0
        self._perc = metrics_mod.PerceptualDistance(models.booster.backbone)

    # --- persistence ---------------------------------------------------

    def save(self, path: str | Path) -> Path:
        arrays: dict[str, np.ndarray] = {}
        arrays.update(self.models.encoder_arrays())
        for cat, disc in self.discs.items():
            for name, arr in module_arrays(disc).items():
                arrays[f"disc_{cat.name.lower()}.{name}"] = arr
        for tag, opt in (("opt_enc", self.opt_enc), ("opt_disc", self.opt_disc)):
            sd = opt.state_dict()
            for pid, st in sd["state"].items():
                arrays[f"{tag}.{pid}.step"] = np.asarray(
                    st["step"].item() if torch.is_tensor(st["step"]) else st["step"], dtype=np.float64
                )
                arrays[f"{tag}.{pid}.exp_avg"] = st["exp_avg"].numpy()
                arrays[f"{tag}.{pid}.exp_avg_sq"] = st["exp_avg_sq"].numpy()
        for tag, pools in (("real_pool", self.real_pools), ("fake_pool", self.fake_pools)):
            for cat, pool in pools.items():
                state = pool.state()
                if state is not None:
                    arrays[f"{tag}_{cat.name.lower()}"] = state.numpy()
        arrays["rng_state"] = self.rng.get_state().numpy()
        meta = {
            "iteration": self.iteration,
            "resolution": self.config.resolution,
            "config_hash": self.config.config_hash(),
        }
        return save_checkpoint(path, "train_state", arrays, meta)

    def load(self, path: str | Path) -> None:
        header, arrays = load_checkpoint(path)
        meta = header["meta"]
        if meta["config_hash"] != self.config.config_hash():
            raise CheckpointError(
                f"checkpoint config hash {meta['config_hash']} does not match current config"
            )
        if meta["resolution"] != self.config.resolution:
            raise CheckpointError("checkpoint resolution mismatch")
        self.models.load_encoder_arrays(arrays)
        for cat, disc in self.discs.items():
            prefix = f"disc_{cat.name.lower()}."
            load_module_arrays(disc, {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})
        for tag, opt in (("opt_enc", self.opt_enc), ("opt_disc", self.opt_disc)):
            sd = opt.state_dict()
            state = {}
            pid = 0
            while f"{tag}.{pid}.step" in arrays:
                state[pid] = {
                    "step": torch.tensor(float(arrays[f"{tag}.{pid}.step"].reshape(-1)[0])),
                    "exp_avg": torch.from_numpy(arrays[f"{tag}.{pid}.exp_avg"].copy()),
                    "exp_avg_sq": torch.from_numpy(arrays[f"{tag}.{pid}.exp_avg_sq"].copy()),
                }
                pid += 1
            sd["state"] = state
            opt.load_state_dict(sd)
        for tag, pools in (("real_pool", self.real_pools), ("fake_pool", self.fake_pools)):
            for cat, pool in pools.items():
                key = f"{tag}_{cat.name.lower()}"
                pool.load_state(torch.from_numpy(arrays[key].copy()) if key in arrays else None)
        self.rng.set_state(torch.from_numpy(arrays["rng_state"].copy()))
        self.iteration = int(meta["iteration"])

    # --- one optimization step ------------------------------------------

    def train_step(self, batch: dict) -> dict:
        """One alternating D-then-G update on a batch.

        batch: {"given_images": (B,4,3,H,W), "given_mask": (B,4) bool, "z": (B,K,w)}.
        """
        cfg = self.config
        models = self.models
        out = models.boost_forward(batch["given_images"], batch["given_mask"], batch["z"], cfg.t_rounds)
        b, k = batch["z"].shape[0], batch["z"].shape[1]
        z_flat = batch["z"].reshape(b * k, -1)

        # --- discriminator update (detached fakes, pooled codes) ---
        d_losses = []
        for i, cat in enumerate(CATEGORY_ORDER):
            fake_list = [codes[i][1] for codes in out.codes[1:] if i in codes]
            if not fake_list:
                continue
            fakes = torch.cat([f.detach() for f in fake_list])
            rows = out.codes[1][i][0]
            reals = models.generators[cat].map_latent(z_flat[rows]).detach()
            reals = self.real_pools[cat].sample_and_insert(reals, self.rng)
            fakes = self.fake_pools[cat].sample_and_insert(fakes, self.rng)
            d_losses.append(disc_loss(self.discs[cat], reals, fakes))
        l_dis = torch.stack(d_losses).mean()
        self.opt_disc.zero_grad(set_to_none=True)
        l_dis.backward()
        self.opt_disc.step()

        # --- encoder update: Eq.-6-style total over rounds 1..T ---
        adv_t, div_t, fcb_t = [], [], []
        flat_imgs = [img.reshape(b * k, NUM_CATEGORIES, 3, *img.shape[-2:]) for img in out.images]
        for t in range(1, cfg.t_rounds + 1):
            cat_losses = [
                adv_loss(self.discs[CATEGORY_ORDER[i]], codes_w)
                for i, (rows, codes_w) in out.codes[t].items()
            ]
            adv_t.append(torch.stack(cat_losses).mean())

            divs = []
            for sample in range(b):
                target_idx = torch.nonzero(~batch["given_mask"][sample], as_tuple=False).squeeze(-1)
                items = out.images[t][sample][:, target_idx]  # (K, n_targets, 3, H, W)
                divs.append(diversity_loss(items, self._perc))
            div_t.append(torch.stack(divs).mean())

            fcb_t.append(fcb_loss(models.booster, flat_imgs[t], flat_imgs[t - 1], cfg.alpha))

        l_total = total_loss(adv_t, div_t, fcb_t, cfg)
        self.opt_enc.zero_grad(set_to_none=True)
        l_total.backward()
        self.opt_enc.step()

        metrics = {
            "l_dis": l_dis.item(),
            "l_adv": torch.stack(adv_t).mean().item(),
            "l_div": torch.stack(div_t).mean().item(),
            "l_fcb": torch.stack(fcb_t).mean().item(),
            "l_total": l_total.item(),
        }
        for name, value in metrics.items():
            if not np.isfinite(value):
                norms = {
                    f"enc_{cat.name.lower()}_norm": float(
                        sum(p.norm().item() for p in models.encoders[cat].parameters())
                    )
                    for cat in CATEGORY_ORDER
                }
                raise TrainError(
                    f"non-finite loss {name}={value} at iteration {self.iteration}; "
                    f"parameter norms: {norms}"
                )
        self.iteration += 1
        return metrics


def _sample_batch(
    images: torch.Tensor,
    config: TrainConfig,
    rng: torch.Generator,
) -> dict:
    n = images.shape[0]
    idx = torch.randint(0, n, (config.batch_size,), generator=rng)
    given = images[idx]
    choices = torch.tensor(config.n_given_choices)
    masks = []
    for _ in range(config.batch_size):
        n_given = int(choices[torch.randint(0, len(choices), (), generator=rng)])
        masks.append(mask_outfit(rng, n_given))
    z = torch.randn(config.batch_size, config.k, W_DIM, generator=rng)
    return {"given_images": given, "given_mask": torch.stack(masks), "z": z}


def load_split_tensor(manifest: DatasetManifest, split: str, limit: int | None = None) -> torch.Tensor:
    """(N, 4, 3, H, W) float tensor of a split's outfits."""
    ids = manifest.splits[split][:limit]
    arr = np.stack([load_outfit_images(manifest, i) for i in ids])
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 1, 4, 2, 3))).float()


@torch.no_grad()
def probe_scores(models: FcbModels, probe: dict, t_rounds: int) -> dict[str, float]:
    """Mean oracle outfit score of a fixed probe set, per boosting round."""
    out = models.complete(probe["given_images"], probe["given_mask"], probe["z"], t_rounds)
    scores = {}
    for t, imgs in enumerate(out.images):
        flat = imgs.reshape(-1, NUM_CATEGORIES, 3, *imgs.shape[-2:])
        vals = []
        for outfit in flat:
            arr = outfit.permute(0, 2, 3, 1).numpy()
            try:
                vals.append(metrics_mod.oracle_outfit_score(arr))
            except metrics_mod.BlankImageError:
                vals.append(0.0)
        scores[f"probe_score_round{t}"] = float(np.mean(vals))
    return scores


def make_probe(test_images: torch.Tensor, config: TrainConfig, seed: int = 123) -> dict:
    rng = torch.Generator().manual_seed(seed)
    n = min(config.probe_size, test_images.shape[0])
    idx = torch.arange(n)
    masks = []
    for _ in range(n):
        n_given = int(torch.randint(1, 4, (), generator=rng))
        masks.append(mask_outfit(rng, n_given))
    z = torch.randn(n, config.probe_k, W_DIM, generator=rng)
    return {"given_images": test_images[idx], "given_mask": torch.stack(masks), "z": z}


def train(config: TrainConfig, resume: bool = False) -> Path:
    """Full training run; writes metrics.jsonl and checkpoints under run_dir."""
    manifest = DatasetManifest.load(config.data_root)
    if manifest.resolution != config.resolution:
        raise TrainError(
            f"dataset is {manifest.resolution}px but config wants {config.resolution}px"
        )
    models = FcbModels.create(config.pretrained_dir, config.resolution, seed=config.seed)
    state = TrainState(models, config)

    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(config.to_dict(), sort_keys=True, indent=1), encoding="utf-8"
    )

    latest = run_dir / "state.ckpt"
    metrics_path = run_dir / "metrics.jsonl"
    if resume and latest.is_file():
        state.load(latest)
    elif metrics_path.exists():
        metrics_path.unlink()

    frozen_hashes = {
        cat.name: (parameter_hash(models.generators[cat].mapping),
                   parameter_hash(models.generators[cat].synthesis))
        for cat in CATEGORY_ORDER
    }

    train_images = load_split_tensor(manifest, "train")
    test_images = load_split_tensor(manifest, "test", limit=config.probe_size)
    probe = make_probe(test_images, config)

    log_lines = []
    with open(metrics_path, "a", encoding="utf-8") as log_file:
        while state.iteration < config.iterations:
            batch = _sample_batch(train_images, config, state.rng)
            metrics = state.train_step(batch)
            if state.iteration % config.log_interval == 0:
                metrics.update(probe_scores(models, probe, config.t_rounds))
                line = json.dumps({"iteration": state.iteration, **metrics}, sort_keys=True)
                log_file.write(line + "\n")
                log_file.flush()
                log_lines.append(line)
            if state.iteration % config.checkpoint_interval == 0:
                state.save(run_dir / f"ckpt_{state.iteration:07d}.ckpt")
                state.save(latest)

    for cat in CATEGORY_ORDER:
        now = (parameter_hash(models.generators[cat].mapping),
               parameter_hash(models.generators[cat].synthesis))
        if now != frozen_hashes[cat.name]:
            raise TrainError(f"frozen generator for {cat.name} changed during training")

    state.save(latest)
    save_sidecar(latest, {"config": config.to_dict(), "seed": config.seed})
    return latest


def load_trained(config: TrainConfig, state_path: str | Path | None = None) -> FcbModels:
    """Rebuild the inference bundle from pretrained parts + a train-state checkpoint."""
    models = FcbModels.create(config.pretrained_dir, config.resolution, seed=config.seed)
    state_path = Path(state_path) if state_path else Path(config.run_dir) / "state.ckpt"
    _, arrays = load_checkpoint(state_path)
    models.load_encoder_arrays(arrays)
    for enc in models.encoders.values():
        enc.eval()
    return models
