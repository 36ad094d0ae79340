"""
NCKP checkpoint layout (little-endian):

    magic "NCKP" | u32 version | u32 config length | config JSON (UTF-8)
    u32 record count | records

    record: u32 name length | name (UTF-8) | u32 ndim | ndim x u32 dims | float32 data (row-major)
"""
from __future__ import annotations

import json
from typing import Any

import numpy as np

from .exceptions import CheckpointFormatError
from .Types import FloatArray

MAGIC = b"NCKP"
VERSION = 1
U32 = np.dtype("<u4")
F32 = np.dtype("<f4")


def _u32(*values: int) -> bytes:
    return np.array(values, dtype=U32).tobytes()


def pack(config: dict[str, Any], tensors: dict[str, FloatArray]) -> bytes:
    config_bytes = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    chunks = [MAGIC, _u32(VERSION, len(config_bytes)), config_bytes, _u32(len(tensors))]

    for name, array in tensors.items():
        encoded_name = name.encode()
        chunks.append(_u32(len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(_u32(array.ndim, *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=F32).tobytes())

    return b"".join(chunks)


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self._payload = payload
        self._offset = 0

    def take(self, size: int, what: str) -> bytes:
        if size < 0 or self._offset + size > len(self._payload):
            raise CheckpointFormatError(f"Truncated checkpoint while reading {what} at byte {self._offset}")
        chunk = self._payload[self._offset : self._offset + size]
        self._offset += size
        return chunk

    def u32(self, what: str, count: int = 1) -> list[int]:
        raw = self.take(U32.itemsize * count, what)
        return [int(v) for v in np.frombuffer(raw, dtype=U32)]

    @property
    def exhausted(self) -> bool:
        return self._offset == len(self._payload)


def unpack(payload: bytes) -> tuple[dict[str, Any], dict[str, FloatArray]]:
    reader = _Reader(payload)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointFormatError("Not a checkpoint: bad magic")

    (version,) = reader.u32("version")
    if version != VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint version {version}")

    (config_length,) = reader.u32("config length")
    try:
        config = json.loads(reader.take(config_length, "config").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"Checkpoint config is not valid JSON: {e}") from e

    tensors: dict[str, FloatArray] = {}
    (count,) = reader.u32("record count")
    for _ in range(count):
        (name_length,) = reader.u32("name length")
        try:
            name = reader.take(name_length, "tensor name").decode()
        except UnicodeDecodeError as e:
            raise CheckpointFormatError(f"Tensor name is not valid UTF-8: {e}") from e

        (ndim,) = reader.u32(f"rank of '{name}'")
        shape = tuple(reader.u32(f"shape of '{name}'", ndim)) if ndim else ()
        size = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(size * F32.itemsize, f"data of '{name}'")
        data = np.frombuffer(raw, dtype=F32).reshape(shape) if size else np.zeros(shape, dtype=F32)
        if not np.isfinite(data).all():
            raise CheckpointFormatError(f"Tensor '{name}' holds non-finite values")
        tensors[name] = data.astype(np.float64)

    if not reader.exhausted:
        raise CheckpointFormatError("Trailing bytes after the last tensor record")
    return config, tensors
