"""Self-describing binary checkpoint container shared by all networks.

Format: magic, little-endian u64 header length, UTF-8 JSON header
(version, kind, category, resolution, array table, free-form meta),
then the raw float/int payloads in header order. Byte output is a pure
function of the contents, so checkpoints can be compared by hash.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import torch

MAGIC = b"FCBCKPT1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(
    path: str | Path,
    kind: str,
    arrays: Mapping[str, np.ndarray],
    meta: dict[str, Any] | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder not in ("=", "<", "|"):
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        table.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str})
        blobs.append(arr.tobytes())
    header = {
        "version": FORMAT_VERSION,
        "kind": kind,
        "arrays": table,
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)
    return path


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint container")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len).decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version in {path}")
        arrays = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
            buf = f.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise CheckpointError(f"truncated payload for {entry['name']} in {path}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(entry["shape"]).copy()
    return header, arrays


def module_arrays(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_module_arrays(module: torch.nn.Module, arrays: Mapping[str, np.ndarray]) -> None:
    state = {k: torch.from_numpy(np.asarray(v)) for k, v in arrays.items()}
    module.load_state_dict(state)


def save_module(
    path: str | Path, kind: str, module: torch.nn.Module, meta: dict[str, Any] | None = None
) -> Path:
    return save_checkpoint(path, kind, module_arrays(module), meta)


def load_module(path: str | Path, kind: str, module: torch.nn.Module) -> dict:
    header, arrays = load_checkpoint(path)
    if header["kind"] != kind:
        raise CheckpointError(f"{path}: expected kind {kind!r}, found {header['kind']!r}")
    load_module_arrays(module, arrays)
    return header


def save_sidecar(path: str | Path, payload: dict) -> Path:
    side = Path(str(path) + ".json")
    side.write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")
    return side
