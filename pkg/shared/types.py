from enum import IntEnum
from typing import NamedTuple, Tuple, Iterable, Sequence, Union
from dataclasses import dataclass
import numpy as np

from shared.constants import NUM_LANDMARKS, NUM_CLASSES
from shared.exceptions import ValidationException


class Point2(NamedTuple):
    """Immutable 2D point in image pixels (x rightward, y downward)."""
    x: float
    y: float


class ClassId(IntEnum):
    """Part classes painted into segmentation masks."""
    BACKGROUND = 0
    SKIN = 1
    EYEBROWS = 2
    EYES = 3
    NOSE = 4
    UPPER_LIP = 5
    INNER_MOUTH = 6
    LOWER_LIP = 7


PointLike = Union[Point2, Tuple[float, float]]


class LandmarkSet:
    """
    Exactly 68 landmarks in Multi-PIE order, stored as a (68, 2) float64 array.
    Indexing with `point(k)` is 1-based to match the annotation convention.
    """

    def __init__(self, points: Union[np.ndarray, Sequence[PointLike]]):
        array = np.array(points, dtype=np.float64)
        if array.ndim != 2 or array.shape != (NUM_LANDMARKS, 2):
            raise ValidationException(
                f"LandmarkSet needs {NUM_LANDMARKS} points, got shape {array.shape}"
            )
        if not np.all(np.isfinite(array)):
            raise ValidationException("LandmarkSet coordinates must be finite")
        array.setflags(write=False)
        self._points = array

    @property
    def points(self) -> np.ndarray:
        """Read-only (68, 2) coordinate array."""
        return self._points

    def point(self, k: int) -> Point2:
        """Landmark k using 1-based Multi-PIE numbering."""
        x, y = self._points[k - 1]
        return Point2(float(x), float(y))

    def select(self, indices: Iterable[int]) -> np.ndarray:
        """Coordinates of the given 1-based landmark indices, in order."""
        return self._points[[k - 1 for k in indices]].copy()

    def bounding_box(self) -> Tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max) of all points."""
        x_min, y_min = self._points.min(axis=0)
        x_max, y_max = self._points.max(axis=0)
        return float(x_min), float(y_min), float(x_max), float(y_max)

    def face_height(self) -> float:
        """Height of the landmark bounding box in pixels."""
        _, y_min, _, y_max = self.bounding_box()
        return y_max - y_min

    def transformed(self, scale: float, offset_x: float, offset_y: float) -> 'LandmarkSet':
        """Apply p' = (p - offset) * scale to every point."""
        shifted = self._points - np.array([offset_x, offset_y])
        return LandmarkSet(shifted * scale)

    def translated(self, dx: float, dy: float) -> 'LandmarkSet':
        """Shift every point by (dx, dy)."""
        return LandmarkSet(self._points + np.array([dx, dy]))

    def __len__(self) -> int:
        return NUM_LANDMARKS

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return bool(np.array_equal(self._points, other._points))

    def __repr__(self) -> str:
        x_min, y_min, x_max, y_max = self.bounding_box()
        return f"LandmarkSet(box=({x_min:.1f}, {y_min:.1f}, {x_max:.1f}, {y_max:.1f}))"


@dataclass
class SegMask:
    """Row-major grid of ClassId labels."""
    width: int
    height: int
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.shape != (self.height, self.width):
            raise ValidationException(
                f"Mask labels shape {self.labels.shape} != ({self.height}, {self.width})"
            )
        if self.labels.size and int(self.labels.max()) >= NUM_CLASSES:
            raise ValidationException(f"Mask label {int(self.labels.max())} is not a valid ClassId")

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> 'SegMask':
        """Wrap an (H, W) label grid."""
        labels = np.asarray(labels)
        return cls(width=labels.shape[1], height=labels.shape[0], labels=labels)

    def histogram(self) -> np.ndarray:
        """Pixel count per class."""
        return np.bincount(self.labels.ravel(), minlength=NUM_CLASSES)

    def copy(self) -> 'SegMask':
        """Create a copy."""
        return SegMask(self.width, self.height, self.labels.copy())


@dataclass
class FaceSample:
    """An image with its landmarks and part mask, all in the same frame."""
    image: np.ndarray
    landmarks: LandmarkSet
    mask: SegMask

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValidationException(f"Image must be H x W x 3, got {self.image.shape}")
        if self.image.shape[:2] != (self.mask.height, self.mask.width):
            raise ValidationException(
                f"Mask {self.mask.width}x{self.mask.height} does not match image "
                f"{self.image.shape[1]}x{self.image.shape[0]}"
            )

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]
