"""Versioned binary checkpoint: magic "SPANET01", JSON config block, then
named parameter tensors as little-endian float32.

Layout after the 8-byte magic: u32 config length + UTF-8 JSON, u32 tensor
count, then per tensor u32 name length + name, u32 ndim, u32 dims, raw
float32 data. Parameters are written in sorted-name order and upcast back
to float64 on load.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .model import SpaNetConfig, SpaNetModel, _parameter_plan

MAGIC = b"SPANET01"


def save_checkpoint(model: SpaNetModel, path: str | Path) -> None:
    config_blob = json.dumps(dataclasses.asdict(model.cfg), sort_keys=True).encode()
    chunks: list[bytes] = [MAGIC, struct.pack("<I", len(config_blob)), config_blob]
    names = sorted(model.params)
    chunks.append(struct.pack("<I", len(names)))
    for name in names:
        tensor = np.ascontiguousarray(model.params[name], dtype="<f4")
        encoded = name.encode()
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(tensor.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes) -> None:
        self.blob = blob
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise DataError("truncated checkpoint file")
        out = self.blob[self.offset : self.offset + n]
        self.offset += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path: str | Path) -> SpaNetModel:
    """Read a checkpoint and verify tensors against the stored config."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint: {exc}") from exc
    reader = _Reader(blob)
    if reader.take(len(MAGIC)) != MAGIC:
        raise DataError("not a model checkpoint (bad magic)")
    try:
        cfg_dict = json.loads(reader.take(reader.u32()).decode())
        cfg = SpaNetConfig(**cfg_dict)
    except (ValueError, TypeError) as exc:
        raise DataError(f"invalid checkpoint config: {exc}") from exc

    params: dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode()
        ndim = reader.u32()
        shape = tuple(struct.unpack(f"<{ndim}I", reader.take(4 * ndim)))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(reader.take(4 * count), dtype="<f4")
        params[name] = data.reshape(shape).astype(np.float64)

    expected = {name: shape for name, shape, _ in _parameter_plan(cfg)}
    if set(params) != set(expected):
        raise DataError("checkpoint tensors do not match the stored config")
    for name, tensor in params.items():
        if tensor.shape != expected[name]:
            raise DataError(f"checkpoint tensor {name} has the wrong shape")
    return SpaNetModel(cfg=cfg, params=params)
