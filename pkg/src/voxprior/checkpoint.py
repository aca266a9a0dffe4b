"""The on-disk checkpoint container shared by every trained model.

Layout: magic ``VXPR``, u32 version=1, u32 metadata byte length, UTF-8 JSON
metadata {model_kind, config, tensors: name -> {shape, offset}}, then the raw
little-endian float32 tensor payloads. Offsets are relative to the start of
the payload section; tensors are laid out in sorted name order so a
checkpoint's bytes are a pure function of its contents.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

CHECKPOINT_MAGIC = b"VXPR"
CHECKPOINT_VERSION = 1

MODEL_KINDS = ("pvqvae", "prior", "cond_label", "cond_attr", "cond_sil")


def save_checkpoint(
    path: Path, model_kind: str, config: dict, tensors: dict[str, np.ndarray]
) -> None:
    if model_kind not in MODEL_KINDS:
        raise DataError(f"unknown model_kind {model_kind!r}")
    table = {}
    offset = 0
    names = sorted(tensors)
    for name in names:
        arr = tensors[name]
        table[name] = {"shape": list(arr.shape), "offset": offset}
        offset += arr.size * 4
    meta = json.dumps(
        {"model_kind": model_kind, "config": config, "tensors": table},
        sort_keys=True,
    ).encode("utf-8")
    try:
        with open(path, "wb") as f:
            f.write(struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(meta)))
            f.write(meta)
            for name in names:
                f.write(np.ascontiguousarray(tensors[name], dtype="<f4").tobytes())
    except OSError as e:
        raise DataError(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path: Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    head = struct.calcsize("<4sII")
    magic, version, meta_len = struct.unpack("<4sII", blob[:head])
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    meta = json.loads(blob[head : head + meta_len].decode("utf-8"))
    payload = blob[head + meta_len :]
    tensors = {}
    for name, entry in meta["tensors"].items():
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload[start : start + size * 4], dtype="<f4")
        tensors[name] = arr.reshape(shape).astype(np.float32)
    return meta["model_kind"], meta["config"], tensors
