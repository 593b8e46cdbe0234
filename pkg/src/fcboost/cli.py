"""Operator CLI: every pipeline stage plus the inference service.

All commands are deterministic under --seed; failures exit non-zero with a
machine-readable JSON error on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import pipeline
from .booster import BoosterPretrainConfig
from .dataset import DatasetManifest, image_to_png, png_to_image
from .gan import GanPretrainConfig
from .metrics import ClassifierConfig, oracle_outfit_score, BlankImageError
from .networks import W_DIM
from .pipeline import MissingArtifact, Paths
from .specs import CATEGORY_ORDER, Category
from .train import FcbModels, TrainConfig, load_trained, train as run_train

EXIT_USAGE = 2
EXIT_FAILURE = 1


def _fail(code: int, error: str, **extra) -> None:
    sys.stderr.write(json.dumps({"error": error, **extra}, sort_keys=True) + "\n")
    sys.exit(code)


def _guard(fn):
    try:
        return fn()
    except MissingArtifact as exc:
        _fail(EXIT_USAGE, exc.name, path=str(exc.path))
    except Exception as exc:  # surfaced as structured output, not a traceback
        _fail(EXIT_FAILURE, str(exc), type=type(exc).__name__)


@click.group()
@click.option("--home", envvar="FCBOOST_HOME", default=None, help="Artifact root (default ~/.fcboost).")
@click.pass_context
def main(ctx, home):
    """FCBoost outfit-completion pipeline."""
    torch.set_num_threads(1)
    ctx.obj = Paths.from_env(home)


@main.command("dataset")
@click.option("--train-count", default=8000, show_default=True)
@click.option("--test-count", default=2000, show_default=True)
@click.option("--resolution", default=64, show_default=True, type=click.Choice(["32", "64"]))
@click.option("--seed", default=0, show_default=True)
@click.pass_obj
def cli_dataset_build(paths: Paths, train_count, test_count, resolution, seed):
    """Render the synthetic outfit dataset and write its manifest."""
    def run():
        manifest = pipeline.stage_dataset(paths, train_count, test_count, int(resolution), seed)
        click.echo(json.dumps({"root": str(manifest.root), "train": len(manifest.splits["train"]),
                               "test": len(manifest.splits["test"])}))
    _guard(run)


@main.command("pretrain-gan")
@click.argument("category", type=click.Choice([c.name.lower() for c in CATEGORY_ORDER] + ["all"]))
@click.option("--iterations", default=3000, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--lr", default=2e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_obj
def cli_pretrain_gan(paths: Paths, category, iterations, batch_size, lr, seed):
    """Unconditional pre-training of one category's mapping+synthesis networks."""
    def run():
        cats = list(CATEGORY_ORDER) if category == "all" else [Category[category.upper()]]
        for cat in cats:
            cfg = GanPretrainConfig(iterations=iterations, batch_size=batch_size, lr=lr,
                                    seed=seed + int(cat))
            log = pipeline.stage_pretrain_gan(paths, cat, cfg)
            click.echo(json.dumps({"category": cat.name.lower(), "final": log[-1] if log else None}))
    _guard(run)


@main.command("pretrain-booster")
@click.option("--iterations", default=2000, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_obj
def cli_pretrain_booster(paths: Paths, iterations, batch_size, seed):
    """Pre-train the type-aware compatibility booster (then frozen)."""
    def run():
        cfg = BoosterPretrainConfig(iterations=iterations, batch_size=batch_size, seed=seed)
        log = pipeline.stage_pretrain_booster(paths, cfg)
        click.echo(json.dumps({"final": log[-1] if log else None}))
    _guard(run)


@main.command("pretrain-classifier")
@click.option("--iterations", default=600, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_obj
def cli_pretrain_classifier(paths: Paths, iterations, seed):
    """Train the category classifier backing the Frechet-distance metric."""
    def run():
        path = pipeline.stage_train_classifier(paths, ClassifierConfig(iterations=iterations, seed=seed))
        click.echo(json.dumps({"classifier": str(path)}))
    _guard(run)


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file mirroring the training-config field names.")
@click.option("--run-name", default="default", show_default=True)
@click.option("--iterations", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--resume/--no-resume", default=False)
@click.pass_obj
def cli_train(paths: Paths, config_path, run_name, iterations, seed, resume):
    """FCBoost training (encoders + latent discriminators)."""
    def run():
        pipeline.check_train_prereqs(paths)
        manifest = paths.require_dataset()
        if config_path:
            cfg = TrainConfig.from_json(config_path)
        else:
            cfg = TrainConfig(resolution=manifest.resolution)
        overrides = {
            "data_root": str(paths.dataset_dir),
            "pretrained_dir": str(paths.pretrained_dir),
            "run_dir": str(paths.run_dir(run_name)),
        }
        if iterations is not None:
            overrides["iterations"] = iterations
        if seed is not None:
            overrides["seed"] = seed
        cfg = TrainConfig.from_dict({**cfg.to_dict(), **overrides})
        state_path = run_train(cfg, resume=resume)
        click.echo(json.dumps({"state": str(state_path), "config_hash": cfg.config_hash()}))
    _guard(run)


@main.command("eval")
@click.option("--run-name", default="default", show_default=True)
@click.option("--metrics", "metric_names", default="fid,diversity,oracle", show_default=True,
              help="Comma list from {fid,diversity,oracle,f2bt}.")
@click.option("--compare", multiple=True, help="Other run names, required for f2bt.")
@click.option("--cases", default=200, show_default=True, help="Held-out given-sets.")
@click.option("--k", default=8, show_default=True)
@click.option("--seed", default=2024, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write the JSON report here too.")
@click.pass_obj
def cli_eval(paths: Paths, run_name, metric_names, compare, cases, k, seed, out):
    """Tables-style JSON evaluation report keyed metric -> {1,2,3,Avg.}."""
    def run():
        wanted = [m.strip() for m in metric_names.split(",") if m.strip()]
        manifest = paths.require_dataset()
        state = paths.require_run(run_name)
        cfg = TrainConfig.from_json(paths.run_dir(run_name) / "config.json")
        models = load_trained(cfg, state)
        eval_cases = pipeline.make_eval_cases(manifest, cases, k, seed=seed)
        completed = pipeline.complete_cases(models, eval_cases, cfg.t_rounds)

        report: dict = {"model_hash": pipeline.model_hash_for_run(state)}
        if "oracle" in wanted:
            report["oracle"] = pipeline.eval_oracle(completed, eval_cases)
        if "fid" in wanted:
            classifier = pipeline.load_classifier(paths)
            report["fid"] = pipeline.eval_fid(completed, eval_cases, manifest, classifier)
        if "diversity" in wanted:
            report["diversity"] = pipeline.eval_diversity(models, eval_cases, k, cfg.t_rounds)
        if "f2bt" in wanted:
            if not compare:
                raise click.UsageError("f2bt needs at least one --compare run")
            completions = {run_name: completed}
            for other in compare:
                other_state = paths.require_run(other)
                other_cfg = TrainConfig.from_json(paths.run_dir(other) / "config.json")
                other_models = load_trained(other_cfg, other_state)
                completions[other] = pipeline.complete_cases(other_models, eval_cases, other_cfg.t_rounds)
            report["f2bt"] = pipeline.eval_f2bt(completions, eval_cases)
        text = json.dumps(report, sort_keys=True, indent=1)
        if out:
            Path(out).write_text(text, encoding="utf-8")
        click.echo(text)
    _guard(run)


@main.command("generate")
@click.option("--given", "given_items", multiple=True, required=True,
              help="category=path.png, repeatable (1-3 distinct categories).")
@click.option("--k", default=4, show_default=True)
@click.option("--rounds", default=2, show_default=True, type=click.IntRange(0, 4))
@click.option("--seed", default=0, show_default=True)
@click.option("--run-name", default="default", show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_obj
def cli_generate(paths: Paths, given_items, k, rounds, seed, run_name, out):
    """Complete an outfit from given item images; writes grid, items, and JSON."""
    def run():
        state = paths.require_run(run_name)
        cfg = TrainConfig.from_json(paths.run_dir(run_name) / "config.json")
        models = load_trained(cfg, state)

        given: dict[Category, np.ndarray] = {}
        for spec in given_items:
            name, _, path = spec.partition("=")
            cat = Category[name.upper()]
            if cat in given:
                raise click.UsageError(f"duplicate given category {name}")
            given[cat] = png_to_image(Path(path))
        if not 1 <= len(given) <= 3:
            raise click.UsageError("need 1-3 given items")

        res = cfg.resolution
        mask = torch.zeros(1, 4, dtype=torch.bool)
        images = torch.zeros(1, 4, 3, res, res)
        for cat, arr in given.items():
            mask[0, int(cat)] = True
            images[0, int(cat)] = torch.from_numpy(arr.transpose(2, 0, 1))

        rng = torch.Generator().manual_seed(seed)
        z = torch.randn(1, k, W_DIM, generator=rng)
        result = models.complete(images, mask, z, rounds)

        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        final = result.images[-1][0]  # (K, 4, 3, H, W)
        sets = []
        for ki in range(k):
            items = []
            round_scores = []
            for t in range(rounds + 1):
                arr = result.images[t][0, ki].permute(0, 2, 3, 1).numpy()
                try:
                    round_scores.append(oracle_outfit_score(arr))
                except BlankImageError:
                    round_scores.append(0.0)
            for ci, cat in enumerate(CATEGORY_ORDER):
                arr = final[ki, ci].permute(1, 2, 0).numpy()
                path = out_dir / f"set{ki}_{cat.name.lower()}.png"
                image_to_png(arr, path)
                items.append({"category": cat.name.lower(), "file": path.name,
                              "source": "given" if bool(mask[0, ci]) else "synthesized"})
            sets.append({"items": items, "round_scores": round_scores})

        rows = [
            np.concatenate([final[ki, ci].permute(1, 2, 0).numpy() for ci in range(4)], axis=1)
            for ki in range(k)
        ]
        image_to_png(np.concatenate(rows, axis=0), out_dir / "grid.png")

        payload = {"seed": seed, "k": k, "rounds": rounds,
                   "model_hash": pipeline.model_hash_for_run(state), "sets": sets}
        (out_dir / "result.json").write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")
        click.echo(json.dumps({"out": str(out_dir), "sets": k}))
    _guard(run)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True)
@click.option("--run-name", default="default", show_default=True)
@click.pass_obj
def cli_serve(paths: Paths, host, port, run_name):
    """Run the HTTP inference service backing the explorer UI."""
    def run():
        import uvicorn

        from .service import create_app

        app = create_app(paths, run_name=run_name)
        uvicorn.run(app, host=host, port=port, log_level="warning")
    _guard(run)


if __name__ == "__main__":
    main()
