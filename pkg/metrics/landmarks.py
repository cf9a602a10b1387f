"""
Landmark localisation error normalised by the outer interocular distance.
"""

import csv
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple
import numpy as np

from shared.constants import OUTER_EYE_CORNERS
from shared.types import LandmarkSet
from shared.exceptions import ValidationException


@dataclass(frozen=True)
class LandmarkErrorReport:
    errors: Tuple[float, ...]
    mean: float


def interocular_distance(landmarks: LandmarkSet) -> float:
    right, left = OUTER_EYE_CORNERS
    return float(np.linalg.norm(np.subtract(landmarks.point(right), landmarks.point(left))))


def landmark_error(pred: LandmarkSet, gt: LandmarkSet) -> float:
    """
    Mean point-to-point distance divided by the distance between the groundtruth
    outer eye corners (points 37 and 46).

    Raises:
        ValidationException: If the groundtruth eye corners coincide
    """
    distance = interocular_distance(gt)
    if distance == 0:
        raise ValidationException("Groundtruth outer eye corners coincide")
    return float(np.linalg.norm(pred.points - gt.points, axis=1).mean() / distance)


def landmark_error_report(preds: Sequence[LandmarkSet], gts: Sequence[LandmarkSet]) -> LandmarkErrorReport:
    """
    Raises:
        ValidationException: If the lists are empty or of different lengths
    """
    if len(preds) != len(gts):
        raise ValidationException(f"{len(preds)} predictions for {len(gts)} groundtruth sets")
    if not preds:
        raise ValidationException("No landmark sets to evaluate")
    errors = tuple(landmark_error(p, g) for p, g in zip(preds, gts))
    return LandmarkErrorReport(errors, float(np.mean(errors)))


def write_landmark_error_csv(path: str, report: LandmarkErrorReport,
                             names: Optional[Sequence[str]] = None) -> None:
    """Rows `image,error`, one per evaluated image."""
    names = names if names is not None else [str(i) for i in range(len(report.errors))]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["image", "error"])
        for name, error in zip(names, report.errors):
            writer.writerow([name, f"{error:.6f}"])
