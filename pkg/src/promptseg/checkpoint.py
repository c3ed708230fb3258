"""Checkpoint archive: named float32 arrays plus a JSON manifest in one file.

Layout: magic, little-endian uint64 header length, UTF-8 JSON header, raw
array bytes. The header carries array names, shapes, offsets, and arbitrary
metadata (config snapshot, vocabulary, epoch, RNG state). Arrays are sorted
by name and serialized little-endian float32, so identical states produce
byte-identical files.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np
import torch

MAGIC = b"PSEGCKPT"
ARRAY_DTYPE = "<f4"

PathLike = Union[str, Path]


class CheckpointError(ValueError):
    """Raised for malformed or incompatible checkpoint files."""


def save_archive(path: PathLike, arrays: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype=np.dtype(ARRAY_DTYPE))
        blob = arr.tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": ARRAY_DTYPE, "offset": offset}
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_archive(path: PathLike) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint archive")
    (header_len,) = struct.unpack_from("<Q", data, len(MAGIC))
    start = len(MAGIC) + 8
    header = json.loads(data[start : start + header_len].decode("utf-8"))
    base = start + header_len
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            data, dtype=np.dtype(entry["dtype"]), count=count, offset=base + entry["offset"]
        )
        arrays[entry["name"]] = arr.reshape(shape).copy()
    return arrays, header["meta"]


def state_dict_to_arrays(state: dict) -> dict[str, np.ndarray]:
    arrays = {}
    for name, tensor in state.items():
        if tensor.dtype != torch.float32:
            raise CheckpointError(f"parameter {name} has dtype {tensor.dtype}; expected float32")
        arrays[name] = tensor.detach().cpu().numpy()
    return arrays


def arrays_to_state_dict(arrays: dict[str, np.ndarray]) -> dict:
    return {name: torch.from_numpy(arr.copy()) for name, arr in arrays.items()}


def save_checkpoint(path: PathLike, model: torch.nn.Module, config_dict: dict,
                    vocab: dict[str, int], epoch: int, extra_meta: dict | None = None) -> None:
    meta = {
        "config": config_dict,
        "vocab": vocab,
        "epoch": epoch,
        "torch_rng_state": torch.get_rng_state().numpy().tobytes().hex(),
    }
    if extra_meta:
        meta.update(extra_meta)
    save_archive(path, state_dict_to_arrays(model.state_dict()), meta)


def load_checkpoint(path: PathLike) -> tuple[dict, dict]:
    """Return (state arrays, meta). Raises CheckpointError when missing."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return load_archive(path)
