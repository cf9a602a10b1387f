"""
Face normalisation: crop around the landmark box, rescale to a fixed height,
and the translation jitter applied per training step.

Crops snap to whole source pixels and rescaling goes through
`pygame.transform.smoothscale`, so images are 8-bit quantised on the way.
"""

from typing import Optional, Tuple
import numpy as np
import pygame

from shared.constants import EYEBROW_WIDTH_FRAC
from shared.types import FaceSample, LandmarkSet
from shared.exceptions import ValidationException
from geometry.masks import landmarks_to_mask
from geometry.io import image_to_surface, surface_to_image


def resample(image: np.ndarray, left: int, top: int, src_width: int, src_height: int,
             out_width: int, out_height: int) -> np.ndarray:
    """
    Copy the source window [left, left + src_width) x [top, top + src_height)
    onto a black canvas and smooth-scale it to out_width x out_height.

    Pixels of the window that fall outside the image stay black.
    """
    if min(src_width, src_height, out_width, out_height) <= 0:
        raise ValidationException(
            f"Resample sizes must be positive, got {src_width}x{src_height} -> {out_width}x{out_height}"
        )
    source = image_to_surface(image)
    window = pygame.Surface((src_width, src_height), 0, source)
    window.fill((0, 0, 0))
    window.blit(source, (-left, -top))
    if (src_width, src_height) != (out_width, out_height):
        window = pygame.transform.smoothscale(window, (out_width, out_height))
    return surface_to_image(window)


def face_box(landmarks: LandmarkSet) -> Tuple[float, float, float, float]:
    """
    Pixel-extent box (x, y, width, height) of the landmarks.

    Raises:
        ValidationException: If the landmark box has zero area
    """
    x_min, y_min, x_max, y_max = landmarks.bounding_box()
    if x_max - x_min <= 0 or y_max - y_min <= 0:
        raise ValidationException("Landmark bounding box has zero area")
    return x_min, y_min, x_max - x_min + 1.0, y_max - y_min + 1.0


def normalize_face(image: np.ndarray, landmarks: LandmarkSet, target_height: int,
                   jitter: float, rng: Optional[np.random.Generator],
                   margin: Optional[float] = None,
                   eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC) -> FaceSample:
    """
    Crop around the landmarks with a jittered box and rescale to `target_height`.

    Args:
        image: H x W x 3 intensities in [0, 1]
        landmarks: Landmarks in the image's coordinates
        target_height: Output height in pixels
        jitter: Box offset range as a fraction of the landmark box size
        rng: Generator for the jitter draw (may be None when jitter is 0)
        margin: Box expansion per side as a fraction of its size (defaults to jitter)
        eyebrow_width_frac: Brow width used when rasterising the mask

    Returns:
        FaceSample whose landmarks went through the same similarity transform

    Raises:
        ValidationException: On a degenerate box or out-of-range parameters
    """
    if target_height <= 0:
        raise ValidationException(f"target_height must be positive, got {target_height}")
    if not 0.0 <= jitter < 0.5:
        raise ValidationException(f"jitter must be in [0, 0.5), got {jitter}")
    if jitter > 0 and rng is None:
        raise ValidationException("A generator is required when jitter > 0")

    box_x, box_y, box_w, box_h = face_box(landmarks)
    margin = jitter if margin is None else margin

    dx = dy = 0.0
    if rng is not None:
        dx = rng.uniform(-jitter, jitter) * box_w
        dy = rng.uniform(-jitter, jitter) * box_h

    left = int(round(box_x - margin * box_w + dx))
    top = int(round(box_y - margin * box_h + dy))
    crop_w = max(1, int(round(box_w * (1.0 + 2.0 * margin))))
    crop_h = max(1, int(round(box_h * (1.0 + 2.0 * margin))))

    scale = target_height / crop_h
    out_width = max(1, int(round(crop_w * scale)))
    out_image = resample(image, left, top, crop_w, crop_h, out_width, target_height)
    out_landmarks = landmarks.transformed(scale, left, top)
    mask = landmarks_to_mask(out_landmarks, out_width, target_height, eyebrow_width_frac)
    return FaceSample(image=np.clip(out_image, 0.0, 1.0), landmarks=out_landmarks, mask=mask)


def jitter_sample(sample: FaceSample, jitter: float, rng: np.random.Generator,
                  eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC) -> FaceSample:
    """Shift an already normalised sample by up to +/- jitter x its landmark box."""
    if jitter <= 0:
        return sample
    _, _, box_w, box_h = face_box(sample.landmarks)
    dx = int(round(rng.uniform(-jitter, jitter) * box_w))
    dy = int(round(rng.uniform(-jitter, jitter) * box_h))
    image = resample(sample.image, dx, dy, sample.width, sample.height, sample.width, sample.height)
    landmarks = sample.landmarks.translated(-dx, -dy)
    mask = landmarks_to_mask(landmarks, sample.width, sample.height, eyebrow_width_frac)
    return FaceSample(image=image, landmarks=landmarks, mask=mask)


def fit_width(sample: FaceSample, width: int,
              eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC) -> FaceSample:
    """Center-crop or zero-pad a sample horizontally to exactly `width` pixels."""
    if width <= 0:
        raise ValidationException(f"width must be positive, got {width}")
    offset = (sample.width - width) // 2
    image = resample(sample.image, offset, 0, width, sample.height, width, sample.height)
    landmarks = sample.landmarks.translated(-offset, 0.0)
    mask = landmarks_to_mask(landmarks, width, sample.height, eyebrow_width_frac)
    return FaceSample(image=image, landmarks=landmarks, mask=mask)
