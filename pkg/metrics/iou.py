"""
Per-class intersection over union.
"""

from dataclasses import dataclass
import numpy as np

from shared.constants import NUM_CLASSES
from shared.types import SegMask
from shared.exceptions import ValidationException


@dataclass(frozen=True)
class IoUReport:
    """
    IoU per class; NaN marks classes absent from both masks, which are left out
    of `mean`.
    """
    per_class: np.ndarray
    mean: float

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.per_class)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IoUReport):
            return NotImplemented
        same_mean = (self.mean == other.mean) or (np.isnan(self.mean) and np.isnan(other.mean))
        return same_mean and np.array_equal(self.per_class, other.per_class, equal_nan=True)


def _labels(mask) -> np.ndarray:
    return mask.labels if isinstance(mask, SegMask) else np.asarray(mask)


def iou(pred: SegMask, gt: SegMask, num_classes: int = NUM_CLASSES) -> IoUReport:
    """
    |pred = c and gt = c| / |pred = c or gt = c| for every class c.

    Raises:
        ValidationException: If the masks differ in size or hold labels >= num_classes
    """
    p, g = _labels(pred), _labels(gt)
    if p.shape != g.shape:
        raise ValidationException(f"Mask sizes differ: {p.shape} vs {g.shape}")
    if p.size and max(int(p.max()), int(g.max())) >= num_classes:
        raise ValidationException(f"Labels must be below {num_classes}")

    p = p.astype(np.int64).ravel()
    g = g.astype(np.int64).ravel()
    confusion = np.bincount(g * num_classes + p, minlength=num_classes ** 2)
    confusion = confusion.reshape(num_classes, num_classes)
    intersection = np.diag(confusion).astype(np.float64)
    union = confusion.sum(axis=0) + confusion.sum(axis=1) - intersection

    per_class = np.full(num_classes, np.nan)
    defined = union > 0
    per_class[defined] = intersection[defined] / union[defined]
    mean = float(per_class[defined].mean()) if defined.any() else float("nan")
    return IoUReport(per_class, mean)
