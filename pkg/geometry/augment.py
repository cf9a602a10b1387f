"""
Occlusion augmentation: a random black rectangle over the image, labels untouched.
"""

from typing import Optional, Tuple
import numpy as np

from shared.constants import OCCLUSION_MIN_FRAC, OCCLUSION_MAX_FRAC
from shared.types import SegMask
from shared.exceptions import ValidationException


def draw_occluder(height: int, width: int, rng: np.random.Generator) -> Tuple[int, int, int, int]:
    """
    Draw (top, left, rect_height, rect_width) for one occluding rectangle.

    Side lengths are uniform in [0.15, 0.4] x image height, capped by the
    image size; the position is uniform over placements fully inside the image.
    """
    rect_h = int(round(rng.uniform(OCCLUSION_MIN_FRAC, OCCLUSION_MAX_FRAC) * height))
    rect_w = int(round(rng.uniform(OCCLUSION_MIN_FRAC, OCCLUSION_MAX_FRAC) * height))
    rect_h = min(max(rect_h, 1), height)
    rect_w = min(max(rect_w, 1), width)
    top = int(rng.integers(0, height - rect_h + 1))
    left = int(rng.integers(0, width - rect_w + 1))
    return top, left, rect_h, rect_w


def occlusion_augment(image: np.ndarray, mask: Optional[SegMask], prob: float,
                      rng: np.random.Generator) -> np.ndarray:
    """
    With probability `prob`, zero one random rectangle of the image.

    Args:
        image: H x W x 3 intensities
        mask: The sample's mask; only checked for matching size, never modified
        prob: Occlusion probability
        rng: Seeded generator

    Returns:
        A new image array (a copy even when nothing is occluded)

    Raises:
        ValidationException: If prob is outside [0, 1] or sizes disagree
    """
    if not 0.0 <= prob <= 1.0:
        raise ValidationException(f"Occlusion probability must be in [0, 1], got {prob}")
    height, width = image.shape[:2]
    if mask is not None and (mask.height, mask.width) != (height, width):
        raise ValidationException("Mask and image sizes differ")

    out = np.array(image, copy=True)
    if rng.random() >= prob:
        return out
    top, left, rect_h, rect_w = draw_occluder(height, width, rng)
    out[top:top + rect_h, left:left + rect_w] = 0.0
    return out
