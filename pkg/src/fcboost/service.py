"""HTTP inference service for the explorer UI.

Endpoints: GET /api/health, GET /api/catalog, POST /api/generate. Responses
are pure functions of (request, checkpoint hash, seed); the model snapshot is
immutable once warm-up finishes.
"""

from __future__ import annotations

import base64
import io
import threading
from typing import Optional

import numpy as np
import torch
from fastapi import FastAPI, HTTPException
from PIL import Image
from pydantic import BaseModel, Field

from . import pipeline
from .dataset import CATEGORY_NAMES, DatasetManifest, png_to_image
from .metrics import BlankImageError, oracle_outfit_score
from .networks import W_DIM
from .pipeline import Paths
from .specs import CATEGORY_ORDER, Category
from .train import FcbModels, TrainConfig, load_trained

MAX_SEED = 2**31 - 1
CATEGORY_BY_NAME = {name: cat for cat, name in CATEGORY_NAMES.items()}


def image_to_b64(image: np.ndarray) -> str:
    arr = np.clip((np.asarray(image) + 1.0) / 2.0 * 255.0, 0, 255).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def b64_to_image(data: str) -> np.ndarray:
    arr = np.asarray(Image.open(io.BytesIO(base64.b64decode(data))).convert("RGB"), dtype=np.float32)
    return arr / 127.5 - 1.0


class GivenItem(BaseModel):
    category: str
    item_id: Optional[str] = None
    image_b64: Optional[str] = None


class LockedItem(BaseModel):
    category: str
    image_b64: str


class GenerationRequest(BaseModel):
    given: list[GivenItem]
    k: int = Field(default=4, ge=1, le=16)
    rounds: int = Field(default=2, ge=0, le=4)
    seed: Optional[int] = None
    locks: list[LockedItem] = Field(default_factory=list)


class Snapshot:
    """Immutable model + catalog snapshot built during warm-up."""

    def __init__(self, paths: Paths, run_name: str):
        self.manifest: DatasetManifest = paths.require_dataset()
        state = paths.require_run(run_name)
        self.config = TrainConfig.from_json(paths.run_dir(run_name) / "config.json")
        self.models: FcbModels = load_trained(self.config, state)
        self.model_hash = pipeline.model_hash_for_run(state)
        self.catalog = []
        for outfit_id in self.manifest.splits["test"]:
            record = self.manifest.records[outfit_id]
            for cat in CATEGORY_ORDER:
                name = CATEGORY_NAMES[cat]
                self.catalog.append({
                    "id": f"{outfit_id}_{name}",
                    "outfit_id": outfit_id,
                    "category": name,
                    "file": record["files"][name],
                })
        self.catalog.sort(key=lambda item: item["id"])
        self._thumbs: dict[str, str] = {}
        self._lock = threading.Lock()

    def thumbnail(self, entry: dict) -> str:
        with self._lock:
            if entry["id"] not in self._thumbs:
                self._thumbs[entry["id"]] = image_to_b64(png_to_image(self.manifest.root / entry["file"]))
            return self._thumbs[entry["id"]]

    def item_image(self, item_id: str) -> np.ndarray:
        outfit_id, _, cat_name = item_id.rpartition("_")
        record = self.manifest.records.get(outfit_id)
        if record is None or cat_name not in record["files"]:
            raise HTTPException(status_code=400, detail=f"unknown item_id {item_id!r}")
        return png_to_image(self.manifest.root / record["files"][cat_name])


def create_app(paths: Paths, run_name: str = "default", warm: bool = True) -> FastAPI:
    app = FastAPI(title="fcboost")
    state: dict = {"snapshot": None, "error": None}

    def warm_up():
        try:
            state["snapshot"] = Snapshot(paths, run_name)
        except Exception as exc:
            state["error"] = str(exc)

    if warm:
        warm_up()
    else:
        threading.Thread(target=warm_up, daemon=True).start()

    def snapshot() -> Snapshot:
        if state["snapshot"] is None:
            detail = state["error"] or "warming up"
            raise HTTPException(status_code=503, detail=detail)
        return state["snapshot"]

    @app.get("/api/health")
    def health():
        if state["snapshot"] is None:
            return {"status": "loading", "error": state["error"], "model_hash": None}
        snap = state["snapshot"]
        return {
            "status": "ready",
            "model_hash": snap.model_hash,
            "resolution": snap.config.resolution,
            "rounds": snap.config.t_rounds,
            "catalog_size": len(snap.catalog),
        }

    @app.get("/api/catalog")
    def catalog(page: int = 0, page_size: int = 24):
        snap = snapshot()
        if page < 0 or page_size < 1:
            raise HTTPException(status_code=400, detail="page must be >= 0 and page_size >= 1")
        start = page * page_size
        items = [
            {"id": e["id"], "category": e["category"], "thumbnail": snap.thumbnail(e)}
            for e in snap.catalog[start:start + page_size]
        ]
        return {
            "items": items,
            "total": len(snap.catalog),
            "page": page,
            "page_size": page_size,
            "model_hash": snap.model_hash,
        }

    @app.post("/api/generate")
    def generate(req: GenerationRequest):
        snap = snapshot()
        res = snap.config.resolution

        def parse_category(name: str, source: str) -> Category:
            cat = CATEGORY_BY_NAME.get(name)
            if cat is None:
                raise HTTPException(status_code=400, detail=f"{source}: unknown category {name!r}")
            return cat

        slots: dict[Category, np.ndarray] = {}
        slot_b64: dict[Category, str] = {}  # echo client-provided bytes verbatim
        for item in req.given:
            cat = parse_category(item.category, "given")
            if cat in slots:
                raise HTTPException(status_code=400, detail=f"given: duplicate category {item.category!r}")
            if item.image_b64:
                img = b64_to_image(item.image_b64)
                slot_b64[cat] = item.image_b64
            elif item.item_id:
                img = snap.item_image(item.item_id)
            else:
                raise HTTPException(status_code=400, detail="given: needs item_id or image_b64")
            if img.shape[0] != res:
                raise HTTPException(status_code=400, detail=f"given: image must be {res}px")
            slots[cat] = img

        lock_cats = set()
        for item in req.locks:
            cat = parse_category(item.category, "locks")
            if cat in slots or cat in lock_cats:
                raise HTTPException(status_code=400, detail=f"locks: category {item.category!r} already given or locked")
            img = b64_to_image(item.image_b64)
            if img.shape[0] != res:
                raise HTTPException(status_code=400, detail=f"locks: image must be {res}px")
            lock_cats.add(cat)
            slots[cat] = img
            slot_b64[cat] = item.image_b64

        if not 1 <= len(slots) <= 3:
            raise HTTPException(status_code=400, detail="given+locks: need between 1 and 3 categories")

        seed = req.seed
        if seed is None:
            seed = int(torch.randint(0, MAX_SEED, ()).item())

        mask = torch.zeros(1, 4, dtype=torch.bool)
        images = torch.zeros(1, 4, 3, res, res)
        for cat, arr in slots.items():
            mask[0, int(cat)] = True
            images[0, int(cat)] = torch.from_numpy(arr.transpose(2, 0, 1).copy())

        rng = torch.Generator().manual_seed(seed)
        z = torch.randn(1, req.k, W_DIM, generator=rng)
        result = snap.models.complete(images, mask, z, req.rounds)

        given_cats = {CATEGORY_NAMES[parse_category(i.category, "given")] for i in req.given}
        sets = []
        for ki in range(req.k):
            round_scores = []
            for t in range(req.rounds + 1):
                arr = result.images[t][0, ki].permute(0, 2, 3, 1).numpy()
                try:
                    round_scores.append(oracle_outfit_score(arr))
                except BlankImageError:
                    round_scores.append(0.0)
            items = []
            for ci, cat in enumerate(CATEGORY_ORDER):
                name = CATEGORY_NAMES[cat]
                if cat in slots:
                    source = "given" if name in given_cats else "locked"
                    b64 = slot_b64.get(cat) or image_to_b64(slots[cat])
                else:
                    source = "synthesized"
                    b64 = image_to_b64(result.images[-1][0, ki, ci].permute(1, 2, 0).numpy())
                items.append({"category": name, "image_b64": b64, "source": source})
            sets.append({"items": items, "round_scores": round_scores})

        return {
            "sets": sets,
            "seed": seed,
            "rounds": req.rounds,
            "k": req.k,
            "model_hash": snap.model_hash,
            "config_hash": snap.config.config_hash(),
        }

    return app
