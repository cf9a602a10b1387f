"""
Four-method comparison: per-class mean IoU per method plus a grand mean, emitted
as `method,class,mean_iou` CSV rows followed by one `method,ALL,mean` row.
"""

import csv
import io
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple
import numpy as np

from shared.constants import CLASS_NAMES
from shared.exceptions import ValidationException
from metrics.iou import IoUReport

METHOD_UNGUIDED = "unguided"
METHOD_CONNECTED = "connected_landmarks"
METHOD_GUIDED_GT = "guided_gt"
METHOD_GUIDED_DETECTED = "guided_detected"
METHODS = (METHOD_UNGUIDED, METHOD_CONNECTED, METHOD_GUIDED_GT, METHOD_GUIDED_DETECTED)

ALL_COLUMN = "ALL"


def _fmt(value: float) -> str:
    return "nan" if np.isnan(value) else f"{value:.6f}"


def class_means(reports: Sequence[IoUReport]) -> np.ndarray:
    """Per-class mean over the images where that class is defined (NaN if never)."""
    if not reports:
        raise ValidationException("No IoU reports to average")
    stacked = np.stack([r.per_class for r in reports])
    defined = ~np.isnan(stacked)
    counts = defined.sum(axis=0)
    sums = np.where(defined, stacked, 0.0).sum(axis=0)
    means = np.full(stacked.shape[1], np.nan)
    means[counts > 0] = sums[counts > 0] / counts[counts > 0]
    return means


@dataclass(frozen=True)
class ComparisonTable:
    """Rows in METHODS order; each row has one mean per class and the grand mean."""
    methods: Tuple[str, ...]
    class_iou: Dict[str, np.ndarray]
    mean_iou: Dict[str, float]
    class_names: Tuple[str, ...] = CLASS_NAMES

    @property
    def columns(self) -> Tuple[str, ...]:
        return tuple(self.class_names) + (ALL_COLUMN,)

    def as_matrix(self) -> np.ndarray:
        return np.array([list(self.class_iou[m]) + [self.mean_iou[m]] for m in self.methods])

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["method", "class", "mean_iou"])
        for method in self.methods:
            for name, value in zip(self.class_names, self.class_iou[method]):
                writer.writerow([method, name, _fmt(value)])
            writer.writerow([method, ALL_COLUMN, _fmt(self.mean_iou[method])])
        return buffer.getvalue()

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            f.write(self.to_csv_text())


def compare_methods(results: Mapping[str, Sequence[IoUReport]],
                    class_names: Sequence[str] = CLASS_NAMES) -> ComparisonTable:
    """
    Aggregate per-image IoU reports of the four methods. The grand mean is the
    mean of the defined class means.

    Raises:
        ValidationException: If a method is missing, unknown, or has no reports
    """
    missing = [m for m in METHODS if m not in results]
    if missing:
        raise ValidationException(f"Missing methods: {missing}")
    unknown = sorted(set(results) - set(METHODS))
    if unknown:
        raise ValidationException(f"Unknown methods: {unknown}")

    class_iou: Dict[str, np.ndarray] = {}
    mean_iou: Dict[str, float] = {}
    for method in METHODS:
        means = class_means(results[method])
        if means.shape != (len(class_names),):
            raise ValidationException(f"{method}: expected {len(class_names)} classes, got {means.shape}")
        class_iou[method] = means
        defined = means[~np.isnan(means)]
        mean_iou[method] = float(defined.mean()) if defined.size else float("nan")
    return ComparisonTable(METHODS, class_iou, mean_iou, tuple(class_names))


def per_image_rows(results: Mapping[str, Sequence[IoUReport]], names: Sequence[str],
                   class_names: Sequence[str] = CLASS_NAMES) -> List[Tuple[str, str, str, str]]:
    rows = []
    for method in METHODS:
        for name, report in zip(names, results.get(method, ())):
            for class_name, value in zip(class_names, report.per_class):
                rows.append((method, name, class_name, _fmt(value)))
    return rows


def write_per_image_csv(path: str, results: Mapping[str, Sequence[IoUReport]],
                        names: Sequence[str], class_names: Sequence[str] = CLASS_NAMES) -> None:
    """Rows `method,image,class,iou` for every method, image and class."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["method", "image", "class", "iou"])
        writer.writerows(per_image_rows(results, names, class_names))
