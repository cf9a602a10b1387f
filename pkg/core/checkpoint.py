"""
Binary parameter checkpoints.

Layout (little-endian): magic "CSEG", u32 version, u32 tensor count; per tensor:
u32 name length, UTF-8 name, u32 rank, u32 dims..., float32 values.
"""

import struct
from typing import Dict, Sequence
import numpy as np

from shared.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from shared.exceptions import ResourceLoadError
from core.tensor import Parameter

_U32 = struct.Struct("<I")
_HEADER = struct.Struct("<4sII")


def save_checkpoint(path: str, params: Sequence[Parameter]) -> None:
    """Write named parameters as float32 tensors in list order."""
    chunks = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(params))]
    for param in params:
        name = param.name.encode("utf-8")
        values = np.ascontiguousarray(param.values, dtype="<f4")
        chunks.append(_U32.pack(len(name)))
        chunks.append(name)
        chunks.append(_U32.pack(values.ndim))
        chunks.extend(_U32.pack(dim) for dim in values.shape)
        chunks.append(values.tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    """
    Read a checkpoint into an insertion-ordered {name: float32 array} dict.

    Raises:
        ResourceLoadError: If the file is unreadable, truncated or not a CSEG file
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise ResourceLoadError(f"Failed to read checkpoint: {path}") from e

    try:
        magic, version, count = _HEADER.unpack_from(raw, 0)
        if magic != CHECKPOINT_MAGIC:
            raise ResourceLoadError(f"{path}: bad magic {magic!r}")
        if version != CHECKPOINT_VERSION:
            raise ResourceLoadError(f"{path}: unsupported version {version}")
        offset = _HEADER.size
        tensors: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = _U32.unpack_from(raw, offset)
            offset += _U32.size
            name = raw[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = _U32.unpack_from(raw, offset)
            offset += _U32.size
            shape = struct.unpack_from(f"<{rank}I", raw, offset)
            offset += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(raw, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            tensors[name] = values.reshape(shape).astype(np.float32)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise ResourceLoadError(f"{path}: corrupt checkpoint ({e})") from e
    if offset != len(raw):
        raise ResourceLoadError(f"{path}: {len(raw) - offset} trailing bytes")
    return tensors
