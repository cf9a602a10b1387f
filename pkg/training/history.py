"""
Loss history records and the `iteration,stage,loss` CSV log.
"""

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple
import numpy as np

from shared.constants import LOSS_SMOOTHING
from network.fcn import NetworkInstance


@dataclass(frozen=True)
class LossRecord:
    iteration: int
    stage: str
    loss: float


@dataclass
class TrainResult:
    """A trained network and the loss of every iteration that produced it."""
    network: NetworkInstance
    history: List[LossRecord] = field(default_factory=list)

    def losses(self, stage: Optional[str] = None) -> np.ndarray:
        return np.array([r.loss for r in self.history if stage is None or r.stage == stage])

    def stage_spans(self) -> Dict[str, Tuple[int, int]]:
        """{stage: (first index, end index)} into `history`, in run order."""
        spans: Dict[str, Tuple[int, int]] = {}
        for index, record in enumerate(self.history):
            start, _ = spans.get(record.stage, (index, index))
            spans[record.stage] = (start, index + 1)
        return spans


def smoothed(losses, alpha: float = LOSS_SMOOTHING) -> np.ndarray:
    """Exponential moving average seeded with the first value."""
    values = np.asarray(losses, dtype=np.float64)
    out = np.empty_like(values)
    running = values[0] if values.size else 0.0
    for i, value in enumerate(values):
        running = (1.0 - alpha) * running + alpha * value
        out[i] = running
    return out


def write_loss_csv(path: str, history: List[LossRecord]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "stage", "loss"])
        for record in history:
            writer.writerow([record.iteration, record.stage, repr(record.loss)])


def read_loss_csv(path: str) -> List[LossRecord]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return [LossRecord(int(row["iteration"]), row["stage"], float(row["loss"])) for row in reader]
