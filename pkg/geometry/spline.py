"""
Centripetal Catmull-Rom splines and constant-width stroke outlines.
"""

from typing import Sequence
import numpy as np

from shared.constants import SPLINE_SEGMENTS_PER_SPAN
from shared.types import PointLike
from shared.exceptions import ValidationException


def polygon_area(vertices: Sequence[PointLike]) -> float:
    """Absolute shoelace area of a closed polygon."""
    pts = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def _centripetal_segment(p0, p1, p2, p3, samples: int, alpha: float) -> np.ndarray:
    t0 = 0.0
    t1 = t0 + np.linalg.norm(p1 - p0) ** alpha
    t2 = t1 + np.linalg.norm(p2 - p1) ** alpha
    t3 = t2 + np.linalg.norm(p3 - p2) ** alpha

    t = np.linspace(t1, t2, samples, endpoint=False)[:, None]
    a1 = (t1 - t) / (t1 - t0) * p0 + (t - t0) / (t1 - t0) * p1
    a2 = (t2 - t) / (t2 - t1) * p1 + (t - t1) / (t2 - t1) * p2
    a3 = (t3 - t) / (t3 - t2) * p2 + (t - t2) / (t3 - t2) * p3
    b1 = (t2 - t) / (t2 - t0) * a1 + (t - t0) / (t2 - t0) * a2
    b2 = (t3 - t) / (t3 - t1) * a2 + (t - t1) / (t3 - t1) * a3
    return (t2 - t) / (t2 - t1) * b1 + (t - t1) / (t2 - t1) * b2


def catmull_rom_chain(points: Sequence[PointLike],
                      samples_per_span: int = SPLINE_SEGMENTS_PER_SPAN,
                      alpha: float = 0.5) -> np.ndarray:
    """
    Sample an open centripetal Catmull-Rom spline through `points`.

    End tangents come from phantom points mirrored through the endpoints.
    Consecutive points must be distinct.

    Returns:
        (spans * samples_per_span + 1, 2) array starting at the first point
        and ending at the last
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    padded = np.vstack([2 * pts[0] - pts[1], pts, 2 * pts[-1] - pts[-2]])
    pieces = [
        _centripetal_segment(padded[i - 1], padded[i], padded[i + 1], padded[i + 2],
                             samples_per_span, alpha)
        for i in range(1, len(pts))
    ]
    pieces.append(pts[-1:])
    return np.vstack(pieces)


def _offset_outline(centerline: np.ndarray, width: float) -> np.ndarray:
    tangents = np.gradient(centerline, axis=0)
    lengths = np.linalg.norm(tangents, axis=1, keepdims=True)
    tangents = tangents / np.where(lengths > 0, lengths, 1.0)
    normals = np.stack([-tangents[:, 1], tangents[:, 0]], axis=1)
    half = 0.5 * width * normals
    left = centerline + half
    right = centerline - half
    return np.vstack([left, right[::-1]])


def eyebrow_stroke(brow_points: Sequence[PointLike], width: float,
                   samples_per_span: int = SPLINE_SEGMENTS_PER_SPAN) -> np.ndarray:
    """
    Closed outline of a constant-width stroke along a brow spline.

    Args:
        brow_points: The 5 brow landmarks in annotation order
        width: Stroke width in pixels
        samples_per_span: Spline samples between consecutive landmarks (>= 8)

    Returns:
        Polygon vertices, left offset forward then right offset backward

    Raises:
        ValidationException: If width is not positive or point count is not 5
    """
    pts = np.asarray(brow_points, dtype=np.float64).reshape(-1, 2)
    if len(pts) != 5:
        raise ValidationException(f"Eyebrow stroke needs 5 points, got {len(pts)}")
    if width <= 0:
        raise ValidationException(f"Eyebrow width must be positive, got {width}")

    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.all(steps > 0):
        centerline = catmull_rom_chain(pts, max(samples_per_span, SPLINE_SEGMENTS_PER_SPAN))
        return _offset_outline(centerline, width)

    # Coincident neighbours: offset the de-duplicated straight polyline instead
    keep = np.concatenate([[True], steps > 0])
    polyline = pts[keep]
    if len(polyline) < 2:
        return np.repeat(polyline[:1], 4, axis=0)
    return _offset_outline(polyline, width)
