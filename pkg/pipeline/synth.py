"""
Procedural face-like samples for desk-scale experiments.

A fixed 68-point template (elliptical jaw, arched brows, almond eyes, nose,
two-layer lips) is warped per sample by a smooth random displacement field,
rasterised with the groundtruth mask geometry and shaded so that neighbouring
parts differ only slightly in intensity under heavy noise. Part boundaries are
therefore hard to read from pixels alone while the landmarks pin them down.
"""

import os
from dataclasses import dataclass
from typing import List, Tuple
import numpy as np

from shared.constants import (
    NUM_CLASSES,
    EYEBROW_WIDTH_FRAC,
    SYNTH_AMPLITUDE,
    SYNTH_TEXTURE_NOISE,
    MINI_TRAIN_SIZE,
)
from shared.types import ClassId, FaceSample, LandmarkSet
from shared.exceptions import ValidationException
from shared.log import get_logger
from geometry import landmarks_to_mask, write_pts, save_image_png, save_mask_png

logger = get_logger("SYNTH")

# landmark box occupies 1 / (1 + 2 * margin) of the image height
SYNTH_MARGIN = 0.1


@dataclass(frozen=True)
class SynthSpec:
    count: int
    size: int = MINI_TRAIN_SIZE
    amplitude: float = SYNTH_AMPLITUDE
    texture_noise: float = SYNTH_TEXTURE_NOISE
    seed: int = 42
    stride: int = 8
    eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC

    def validate(self) -> None:
        """
        Raises:
            ValidationException: On a non-positive count or a size the network cannot take
        """
        if self.count <= 0:
            raise ValidationException(f"count must be positive, got {self.count}")
        if self.size <= 0 or self.stride <= 0 or self.size % self.stride:
            raise ValidationException(f"size {self.size} is not divisible by stride {self.stride}")
        if self.amplitude < 0 or self.texture_noise < 0:
            raise ValidationException("amplitude and texture_noise must not be negative")


def _arc(cx: float, cy: float, rx: float, ry: float, angles) -> np.ndarray:
    angles = np.asarray(angles, dtype=np.float64)
    return np.stack([cx + rx * np.cos(angles), cy - ry * np.sin(angles)], axis=1)


def face_template() -> np.ndarray:
    """
    68 x 2 template in face units: x in about [-0.85, 0.85], y down in about
    [-0.72, 0.95].
    """
    jaw_angles = np.pi - np.arange(17) * np.pi / 16
    jaw = np.stack([0.85 * np.cos(jaw_angles), -0.25 + 1.2 * np.sin(jaw_angles)], axis=1)

    t = np.linspace(0.0, 1.0, 5)
    arch = -0.6 - 0.12 * np.sin(np.pi * t)
    right_brow = np.stack([-0.7 + 0.55 * t, arch], axis=1)
    left_brow = np.stack([0.15 + 0.55 * t, arch[::-1]], axis=1)

    bridge = np.stack([np.zeros(4), np.linspace(-0.35, 0.2, 4)], axis=1)
    nostrils = np.stack([np.linspace(-0.18, 0.18, 5), 0.3 + 0.04 * (1.0 - np.abs(np.linspace(-1, 1, 5)))],
                        axis=1)

    eye_angles = np.pi - np.arange(6) * np.pi / 3
    right_eye = _arc(-0.38, -0.3, 0.16, 0.07, eye_angles)
    left_eye = _arc(0.38, -0.3, 0.16, 0.07, eye_angles)

    upper_outer = np.pi - np.arange(7) * np.pi / 6
    lower_outer = -np.arange(1, 6) * np.pi / 6
    outer_lips = _arc(0.0, 0.6, 0.35, 0.15, np.concatenate([upper_outer, lower_outer]))
    inner_lips = _arc(0.0, 0.6, 0.25, 0.05, np.pi - np.arange(8) * np.pi / 4)

    return np.concatenate([jaw, right_brow, left_brow, bridge, nostrils,
                           right_eye, left_eye, outer_lips, inner_lips])


def _deform(points: np.ndarray, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    # sum of three low-frequency waves per axis, bounded by 2 * amplitude face units
    out = points.copy()
    for axis in range(2):
        coeffs = rng.uniform(-1.0, 1.0, size=3)
        freqs = rng.uniform(0.5, 2.0, size=(3, 2))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
        waves = np.sin(points @ freqs.T + phases)
        out[:, axis] += 2.0 * amplitude * (waves @ coeffs) / 3.0
    return out


def _to_pixels(points: np.ndarray, size: int) -> np.ndarray:
    lo, hi = points.min(axis=0), points.max(axis=0)
    scale = size / ((hi[1] - lo[1]) * (1.0 + 2.0 * SYNTH_MARGIN))
    center = (lo + hi) / 2.0
    return (points - center) * scale + size / 2.0


def _palette(rng: np.random.Generator) -> np.ndarray:
    skin = rng.uniform(0.45, 0.75) * np.array([1.0, 0.86, 0.72]) + rng.uniform(-0.04, 0.04, 3)
    background = rng.uniform(0.2, 0.8, 3)
    lip = skin + np.array([0.06, -0.04, -0.04])
    colors = np.empty((NUM_CLASSES, 3))
    colors[ClassId.BACKGROUND] = background
    colors[ClassId.SKIN] = skin
    colors[ClassId.EYEBROWS] = skin - 0.10
    colors[ClassId.EYES] = skin - 0.08
    colors[ClassId.NOSE] = skin + 0.03
    colors[ClassId.UPPER_LIP] = lip
    colors[ClassId.INNER_MOUTH] = skin - 0.12
    colors[ClassId.LOWER_LIP] = lip
    return colors


def render_sample(landmarks: LandmarkSet, size: int, texture_noise: float,
                  rng: np.random.Generator, eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC) -> FaceSample:
    """Rasterise the mask of `landmarks` and shade it into a noisy RGB image."""
    mask = landmarks_to_mask(landmarks, size, size, eyebrow_width_frac)
    image = _palette(rng)[mask.labels]

    direction = rng.uniform(-1.0, 1.0, 2)
    rows, cols = np.mgrid[0:size, 0:size] / max(size - 1, 1) - 0.5
    image += (0.1 * (direction[0] * cols + direction[1] * rows))[..., None]
    image += rng.normal(0.0, texture_noise, image.shape)
    return FaceSample(image=np.clip(image, 0.0, 1.0), landmarks=landmarks, mask=mask)


def synth_faces(spec: SynthSpec) -> List[FaceSample]:
    """
    Generate `spec.count` samples. Each sample draws from its own child generator,
    so a fixed seed reproduces the dataset bit for bit.
    """
    spec.validate()
    template = face_template()
    samples = []
    for child in np.random.SeedSequence(spec.seed).spawn(spec.count):
        rng = np.random.default_rng(child)
        points = _deform(template, spec.amplitude, rng)
        landmarks = LandmarkSet(_to_pixels(points, spec.size))
        samples.append(render_sample(landmarks, spec.size, spec.texture_noise, rng,
                                     spec.eyebrow_width_frac))
    logger.info(f"Generated {spec.count} synthetic {spec.size}x{spec.size} faces (seed {spec.seed})")
    return samples


def sample_stem(index: int) -> str:
    return f"{index:05d}"


def export_dataset(samples: List[FaceSample], out_dir: str) -> List[Tuple[str, str]]:
    """
    Write NNNNN.png, NNNNN.pts and NNNNN_mask.png per sample.

    Returns:
        (image path, pts path) pairs in sample order
    """
    os.makedirs(out_dir, exist_ok=True)
    pairs = []
    for index, sample in enumerate(samples):
        stem = os.path.join(out_dir, sample_stem(index))
        save_image_png(f"{stem}.png", sample.image)
        write_pts(f"{stem}.pts", sample.landmarks)
        save_mask_png(f"{stem}_mask.png", sample.mask)
        pairs.append((f"{stem}.png", f"{stem}.pts"))
    logger.info(f"Exported {len(samples)} samples to {out_dir}")
    return pairs
