"""
Landmark <-> Gaussian heatmap conversion and guided-network input stacking.

Heatmap pixel (r, c) has its center at coordinate (x=c, y=r).
"""

from dataclasses import dataclass
from typing import List, Optional
import numpy as np

from shared.constants import NUM_LANDMARKS, HEATMAP_SIGMA, TARGET_FACE_HEIGHT
from shared.types import LandmarkSet
from shared.exceptions import ValidationException
from shared.log import get_logger
from core.tensor import Tensor

logger = get_logger("HEATMAP")


@dataclass
class HeatmapStack:
    """K x H x W confidence maps, one peak-normalised Gaussian per landmark."""
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValidationException(f"HeatmapStack needs 3 dimensions, got {self.data.shape}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def scaled_sigma(height: int, sigma_at_reference: float = HEATMAP_SIGMA) -> float:
    """Sigma for a face of `height` pixels, proportional to 5 px at 350 px."""
    return sigma_at_reference * height / TARGET_FACE_HEIGHT


def encode_landmarks(landmarks: LandmarkSet, width: int, height: int, sigma: float) -> HeatmapStack:
    """
    One Gaussian channel per landmark, evaluated at pixel centers.

    Out-of-bounds landmarks still contribute their in-bounds tail.

    Raises:
        ValidationException: If sigma is not positive
    """
    if sigma <= 0:
        raise ValidationException(f"sigma must be positive, got {sigma}")
    pts = landmarks.points
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    # separable: exp(-(dx^2 + dy^2) / 2s^2) = gx * gy
    gx = np.exp(-((xs[None, :] - pts[:, 0:1]) ** 2) / (2.0 * sigma ** 2))
    gy = np.exp(-((ys[None, :] - pts[:, 1:2]) ** 2) / (2.0 * sigma ** 2))
    return HeatmapStack(gy[:, :, None] * gx[:, None, :])


def decode_heatmaps(stack: HeatmapStack, report: Optional[List[int]] = None) -> LandmarkSet:
    """
    Argmax per channel; ties go to the smallest row, then the smallest column.

    Args:
        stack: 68-channel heatmaps (or raw network scores)
        report: If given, 1-based indices of all-zero channels are appended

    Returns:
        Integer-valued landmark coordinates (x=column, y=row)

    Raises:
        ValidationException: If the stack does not have 68 channels
    """
    if stack.channels != NUM_LANDMARKS:
        raise ValidationException(f"Expected {NUM_LANDMARKS} channels, got {stack.channels}")
    flat = stack.data.reshape(NUM_LANDMARKS, -1)
    best = np.argmax(flat, axis=1)
    rows, cols = np.divmod(best, stack.width)

    empty = np.nonzero(~np.any(flat != 0, axis=1))[0]
    if empty.size:
        logger.warning(f"{empty.size} empty heatmap channel(s) decoded as (0, 0)")
        if report is not None:
            report.extend(int(k) + 1 for k in empty)
    return LandmarkSet(np.stack([cols, rows], axis=1).astype(np.float64))


def stack_input(image: np.ndarray, heatmaps: HeatmapStack) -> Tensor:
    """
    Channel-first guided input [R, G, B, landmark_1 ... landmark_68].

    Values are converted to the current default dtype (see
    `core.precision`); under float32 a float64 image is rounded.

    Raises:
        ValidationException: If spatial dimensions differ
    """
    if image.ndim != 3 or image.shape[:2] != (heatmaps.height, heatmaps.width):
        raise ValidationException(
            f"Image {image.shape} does not match heatmaps {heatmaps.height}x{heatmaps.width}"
        )
    rgb = np.transpose(image, (2, 0, 1))
    return Tensor(np.concatenate([rgb, heatmaps.data], axis=0))


def image_input(image: np.ndarray) -> Tensor:
    """Channel-first RGB input for unguided networks, in the current default dtype."""
    return Tensor(np.transpose(image, (2, 0, 1)))
