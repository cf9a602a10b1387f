"""
Debug dump format for heatmap stacks: 16-byte header then float32 pages.

Header (little-endian): magic "HMST", u32 channels, u32 height, u32 width.
"""

import struct
import numpy as np

from shared.constants import HEATMAP_MAGIC
from shared.exceptions import ResourceLoadError
from heatmap.encoding import HeatmapStack

_HEADER = struct.Struct("<4sIII")


def save_heatmaps(path: str, stack: HeatmapStack) -> None:
    """Write a stack as channel-major little-endian float32 pages."""
    with open(path, "wb") as f:
        f.write(_HEADER.pack(HEATMAP_MAGIC, stack.channels, stack.height, stack.width))
        f.write(np.ascontiguousarray(stack.data, dtype="<f4").tobytes())


def load_heatmaps(path: str) -> HeatmapStack:
    """
    Read a stack written by `save_heatmaps`.

    Raises:
        ResourceLoadError: If the magic or payload size is wrong
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise ResourceLoadError(f"Failed to read heatmaps: {path}") from e
    if len(raw) < _HEADER.size:
        raise ResourceLoadError(f"{path}: truncated header")
    magic, channels, height, width = _HEADER.unpack_from(raw)
    if magic != HEATMAP_MAGIC:
        raise ResourceLoadError(f"{path}: bad magic {magic!r}")
    expected = channels * height * width * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise ResourceLoadError(f"{path}: expected {expected} payload bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype="<f4").reshape(channels, height, width)
    return HeatmapStack(data.astype(np.float32))
