"""
Gaussian landmark-displacement model fitted from detector errors and used to
perturb groundtruth guidance during training.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence
import numpy as np

from shared.constants import NUM_LANDMARKS, FULL_COVARIANCE_MIN_SAMPLES
from shared.types import LandmarkSet
from shared.exceptions import ValidationException, ResourceLoadError
from shared.log import get_logger

logger = get_logger("NOISE")


@dataclass
class NoiseModel:
    """
    Per-landmark displacement means (68 x 2) and covariances (68 x 2 x 2),
    plus the face height the displacements were measured at.

    `joint_covariance` (136 x 136) is set only by the full-covariance variant.
    """
    means: np.ndarray
    covariances: np.ndarray
    face_size_ref: float
    joint_covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.covariances = np.asarray(self.covariances, dtype=np.float64)
        if self.means.shape != (NUM_LANDMARKS, 2):
            raise ValidationException(f"Noise means must be (68, 2), got {self.means.shape}")
        if self.covariances.shape != (NUM_LANDMARKS, 2, 2):
            raise ValidationException(f"Noise covariances must be (68, 2, 2), got {self.covariances.shape}")
        if not np.all(np.isfinite(self.means)) or not np.all(np.isfinite(self.covariances)):
            raise ValidationException("Noise model values must be finite")
        if self.face_size_ref <= 0:
            raise ValidationException(f"face_size_ref must be positive, got {self.face_size_ref}")
        if self.joint_covariance is not None:
            self.joint_covariance = np.asarray(self.joint_covariance, dtype=np.float64)

    @classmethod
    def zero(cls, face_size_ref: float = 1.0) -> 'NoiseModel':
        """A model that never moves any landmark."""
        return cls(np.zeros((NUM_LANDMARKS, 2)), np.zeros((NUM_LANDMARKS, 2, 2)), face_size_ref)


def _psd_factor(covariance: np.ndarray) -> np.ndarray:
    # clip numerically negative eigenvalues so sampling stays real
    eigvals, eigvecs = np.linalg.eigh(covariance)
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def fit_noise_model(predicted: Sequence[LandmarkSet], groundtruth: Sequence[LandmarkSet],
                    full_covariance: bool = False) -> NoiseModel:
    """
    Fit displacement statistics of (predicted - groundtruth).

    Covariances use the unbiased n-1 estimator; a single pair gives zero covariance.
    The face-size reference is the mean groundtruth face height.

    Args:
        predicted: Detected landmark sets
        groundtruth: Matching groundtruth sets
        full_covariance: Also fit the joint 136-d covariance when enough samples exist

    Raises:
        ValidationException: If the lists are empty or differ in length
    """
    if len(predicted) == 0 or len(predicted) != len(groundtruth):
        raise ValidationException(
            f"Need equally sized non-empty lists, got {len(predicted)} and {len(groundtruth)}"
        )
    pred = np.stack([p.points for p in predicted])
    gt = np.stack([g.points for g in groundtruth])
    disp = pred - gt
    n = disp.shape[0]

    means = disp.mean(axis=0)
    centered = disp - means
    if n > 1:
        covariances = np.einsum("nki,nkj->kij", centered, centered) / (n - 1)
    else:
        covariances = np.zeros((NUM_LANDMARKS, 2, 2))

    joint = None
    if full_covariance:
        if n >= FULL_COVARIANCE_MIN_SAMPLES:
            flat = centered.reshape(n, -1)
            joint = flat.T @ flat / (n - 1)
        else:
            logger.warning(
                f"Full covariance needs >= {FULL_COVARIANCE_MIN_SAMPLES} samples, got {n}; "
                "using per-landmark model"
            )

    face_size_ref = float(np.mean([g.face_height() for g in groundtruth]))
    if face_size_ref <= 0:
        raise ValidationException("Groundtruth faces have zero height")
    return NoiseModel(means, covariances, face_size_ref, joint)


def perturb(landmarks: LandmarkSet, model: NoiseModel, rng: np.random.Generator) -> LandmarkSet:
    """
    Displace every landmark by a draw from the model, scaled by
    (face height / model face-size reference).
    """
    scale = landmarks.face_height() / model.face_size_ref
    if model.joint_covariance is not None:
        factor = _psd_factor(model.joint_covariance)
        z = rng.standard_normal(2 * NUM_LANDMARKS)
        offsets = model.means + (factor @ z).reshape(NUM_LANDMARKS, 2)
    else:
        z = rng.standard_normal((NUM_LANDMARKS, 2))
        factors = np.stack([_psd_factor(cov) for cov in model.covariances])
        offsets = model.means + np.einsum("kij,kj->ki", factors, z)
    return LandmarkSet(landmarks.points + scale * offsets)


def save_noise_model(path: str, model: NoiseModel) -> None:
    """
    Write `face_size_ref <value>`, then one `k dx dy sxx sxy syy` line per
    landmark. A full-covariance model appends a `joint` line followed by the
    136 rows of its joint covariance.
    """
    lines = [f"face_size_ref {float(model.face_size_ref)!r}"]
    means = model.means.tolist()
    covariances = model.covariances.tolist()
    for k in range(NUM_LANDMARKS):
        (dx, dy), cov = means[k], covariances[k]
        lines.append(f"{k + 1} {dx!r} {dy!r} {cov[0][0]!r} {cov[0][1]!r} {cov[1][1]!r}")
    if model.joint_covariance is not None:
        lines.append("joint")
        lines.extend(" ".join(repr(v) for v in row) for row in model.joint_covariance.tolist())
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_noise_model(path: str) -> NoiseModel:
    """
    Read a model written by `save_noise_model`.

    Raises:
        ResourceLoadError: On a malformed file
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [line.split() for line in f if line.strip()]
    except OSError as e:
        raise ResourceLoadError(f"Failed to read noise model: {path}") from e
    try:
        if lines[0][0] != "face_size_ref":
            raise ValueError("missing face_size_ref header")
        face_size_ref = float(lines[0][1])
        body = lines[1:NUM_LANDMARKS + 1]
        rows: List[List[float]] = [[float(v) for v in parts[1:]] for parts in body]
        if len(rows) != NUM_LANDMARKS or any(len(row) != 5 for row in rows):
            raise ValueError("expected 68 rows of 5 values")
        table = np.array(rows)
        covariances = np.empty((NUM_LANDMARKS, 2, 2))
        covariances[:, 0, 0] = table[:, 2]
        covariances[:, 0, 1] = covariances[:, 1, 0] = table[:, 3]
        covariances[:, 1, 1] = table[:, 4]

        joint = None
        rest = lines[NUM_LANDMARKS + 1:]
        if rest:
            if rest[0] != ["joint"]:
                raise ValueError(f"unexpected line after landmark rows: {' '.join(rest[0])}")
            joint = np.array([[float(v) for v in parts] for parts in rest[1:]])
            if joint.shape != (2 * NUM_LANDMARKS, 2 * NUM_LANDMARKS):
                raise ValueError(f"joint covariance must be 136 x 136, got {joint.shape}")
        return NoiseModel(table[:, :2], covariances, face_size_ref, joint)
    except (ValueError, IndexError, ValidationException) as e:
        raise ResourceLoadError(f"{path}: {e}") from e
