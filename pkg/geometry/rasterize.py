"""
Scanline polygon fill using the even-odd rule at pixel centers.
"""

from typing import Sequence
import numpy as np

from shared.types import PointLike
from shared.exceptions import ValidationException


def rasterize_polygon(vertices: Sequence[PointLike], width: int, height: int) -> np.ndarray:
    """
    Fill a closed polygon into a boolean (height, width) grid.

    Pixel (i, j) is set iff its center (j + 0.5, i + 0.5) is inside by the
    even-odd rule. Vertices outside the grid are clipped implicitly.

    Args:
        vertices: Polygon vertices; the last connects back to the first
        width: Grid width in pixels
        height: Grid height in pixels

    Returns:
        Boolean mask of shape (height, width)

    Raises:
        ValidationException: If fewer than 3 vertices are given
    """
    pts = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        raise ValidationException(f"Polygon needs at least 3 vertices, got {len(pts)}")

    mask = np.zeros((max(height, 0), max(width, 0)), dtype=bool)
    if width <= 0 or height <= 0:
        return mask

    centers_x = np.arange(width, dtype=np.float64) + 0.5
    centers_y = np.arange(height, dtype=np.float64) + 0.5
    nxt = np.roll(pts, -1, axis=0)

    for (ax, ay), (bx, by) in zip(pts, nxt):
        if ay == by:
            continue
        rows = np.nonzero((ay > centers_y) != (by > centers_y))[0]
        if rows.size == 0:
            continue
        py = centers_y[rows]
        crossing = (bx - ax) * (py - ay) / (by - ay) + ax
        # every crossing to the right of a center flips its parity
        mask[rows] ^= centers_x[None, :] < crossing[:, None]
    return mask
