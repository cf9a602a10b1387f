"""
Groundtruth part masks built by joining the 68 landmarks into component outlines.
"""

from typing import List, Tuple
import numpy as np

from shared.constants import (
    JAW,
    RIGHT_BROW,
    LEFT_BROW,
    NOSTRILS,
    RIGHT_EYE,
    LEFT_EYE,
    INNER_LIPS,
    EYEBROW_WIDTH_FRAC,
)
from shared.types import ClassId, LandmarkSet, SegMask
from shared.exceptions import ValidationException
from geometry.rasterize import rasterize_polygon
from geometry.spline import eyebrow_stroke

# Jaw closed over the top through the brows: 1..17, 27..23, 22..18
SKIN_OUTLINE = JAW + tuple(reversed(LEFT_BROW)) + tuple(reversed(RIGHT_BROW))
# Bridge top 28 then nostrils 32..36; the closing edge back to 28 passes the
# tip 31, which is left off the outline and falls inside it on plausible faces
NOSE_OUTLINE = (28,) + NOSTRILS
UPPER_LIP_OUTLINE = tuple(range(49, 56)) + (65, 64, 63, 62, 61)
INNER_MOUTH_OUTLINE = INNER_LIPS
LOWER_LIP_OUTLINE = tuple(range(55, 61)) + (49, 61, 68, 67, 66, 65)


def component_polygons(landmarks: LandmarkSet, brow_width: float) -> List[Tuple[ClassId, np.ndarray]]:
    """
    Component outlines in paint order; later entries overwrite earlier ones.

    Args:
        landmarks: The 68 landmarks
        brow_width: Eyebrow stroke width in pixels

    Returns:
        List of (class, polygon vertices)
    """
    return [
        (ClassId.SKIN, landmarks.select(SKIN_OUTLINE)),
        (ClassId.EYEBROWS, eyebrow_stroke(landmarks.select(RIGHT_BROW), brow_width)),
        (ClassId.EYEBROWS, eyebrow_stroke(landmarks.select(LEFT_BROW), brow_width)),
        (ClassId.EYES, landmarks.select(RIGHT_EYE)),
        (ClassId.EYES, landmarks.select(LEFT_EYE)),
        (ClassId.NOSE, landmarks.select(NOSE_OUTLINE)),
        (ClassId.UPPER_LIP, landmarks.select(UPPER_LIP_OUTLINE)),
        (ClassId.INNER_MOUTH, landmarks.select(INNER_MOUTH_OUTLINE)),
        (ClassId.LOWER_LIP, landmarks.select(LOWER_LIP_OUTLINE)),
    ]


def paint_components(labels: np.ndarray, landmarks: LandmarkSet, brow_width: float) -> np.ndarray:
    """Paint every component over `labels` in place and return it."""
    height, width = labels.shape
    for class_id, polygon in component_polygons(landmarks, brow_width):
        labels[rasterize_polygon(polygon, width, height)] = class_id
    return labels


def landmarks_to_mask(landmarks: LandmarkSet, width: int, height: int,
                      eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC) -> SegMask:
    """
    Build the part mask for one face.

    Args:
        landmarks: The 68 landmarks in mask coordinates
        width: Mask width in pixels
        height: Mask height in pixels (the normalised face height)
        eyebrow_width_frac: Brow stroke width as a fraction of `height`

    Returns:
        SegMask where every pixel holds exactly one ClassId

    Raises:
        ValidationException: If the mask size is not positive
    """
    if width <= 0 or height <= 0:
        raise ValidationException(f"Mask size must be positive, got {width}x{height}")
    labels = np.full((height, width), ClassId.BACKGROUND, dtype=np.uint8)
    brow_width = max(eyebrow_width_frac * height, 1e-6)
    paint_components(labels, landmarks, brow_width)
    return SegMask(width=width, height=height, labels=labels)


def fold_seven_classes(mask: SegMask) -> SegMask:
    """
    Seven-class labelling: background merges into skin and ids shift down by one.
    """
    labels = mask.labels.astype(np.int16)
    labels[labels == ClassId.BACKGROUND] = ClassId.SKIN
    return SegMask(mask.width, mask.height, (labels - 1).astype(np.uint8))
