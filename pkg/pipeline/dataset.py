"""
Dataset manifests over directories of image + pts pairs and the loader that
turns them into normalised, labelled face samples.
"""

import glob
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import numpy as np

from shared.constants import VALIDATION_FRACTION, EYEBROW_WIDTH_FRAC, DEFAULT_JITTER
from shared.types import FaceSample
from shared.exceptions import CascadeSegException, DatasetException, ValidationException
from shared.log import get_logger
from geometry import parse_pts, load_image_png, normalize_face, fit_width

logger = get_logger("DATA")

SPLIT_TRAIN = "train"
SPLIT_VAL = "val"
SPLIT_TEST = "test"
SPLITS = (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST)

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class DatasetEntry:
    image: str
    pts: str

    @property
    def name(self) -> str:
        return os.path.splitext(os.path.basename(self.pts))[0]


def split_indices(count: int, val_fraction: float, test_fraction: float,
                  seed: int) -> Dict[str, Tuple[int, ...]]:
    """
    Seeded disjoint train/val/test index sets covering range(count). The test set
    takes `test_fraction` of all entries; validation takes `val_fraction` of the rest.
    """
    if not 0.0 <= val_fraction < 1.0 or not 0.0 <= test_fraction < 1.0:
        raise ValidationException("Split fractions must be in [0, 1)")
    order = np.random.default_rng(seed).permutation(count)
    n_test = int(round(count * test_fraction))
    n_val = int(round((count - n_test) * val_fraction))
    return {
        SPLIT_TEST: tuple(sorted(int(i) for i in order[:n_test])),
        SPLIT_VAL: tuple(sorted(int(i) for i in order[n_test:n_test + n_val])),
        SPLIT_TRAIN: tuple(sorted(int(i) for i in order[n_test + n_val:])),
    }


@dataclass(frozen=True)
class DatasetManifest:
    """Image + pts pairs under `root` with a seeded split assignment."""
    root: str
    entries: Tuple[DatasetEntry, ...]
    seed: int = 42
    val_fraction: float = VALIDATION_FRACTION
    test_fraction: float = 0.0
    splits: Dict[str, Tuple[int, ...]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for entry in self.entries:
            for path in (entry.image, entry.pts):
                if not os.path.isfile(path):
                    raise ValidationException(f"Manifest entry file does not exist: {path}")
        object.__setattr__(self, "splits", split_indices(
            len(self.entries), self.val_fraction, self.test_fraction, self.seed))

    @classmethod
    def from_directory(cls, root: str, seed: int = 42, val_fraction: float = VALIDATION_FRACTION,
                       test_fraction: float = 0.0) -> 'DatasetManifest':
        """
        Pair every `<stem>.pts` with an image `<stem>.png/.jpg/...` in `root`
        (mask files are ignored). Unpaired pts files are skipped with a warning.

        Raises:
            DatasetException: If `root` is not a directory
        """
        if not os.path.isdir(root):
            raise DatasetException(f"Dataset directory not found: {root}")
        entries = []
        for pts in sorted(glob.glob(os.path.join(root, "*.pts"))):
            stem = os.path.splitext(pts)[0]
            image = next((stem + s for s in _IMAGE_SUFFIXES if os.path.isfile(stem + s)), None)
            if image is None:
                logger.warning(f"No image for {pts}, skipping")
                continue
            entries.append(DatasetEntry(image, pts))
        logger.info(f"Found {len(entries)} image/pts pairs in {root}")
        return cls(root, tuple(entries), seed, val_fraction, test_fraction)

    def split(self, name: str) -> List[DatasetEntry]:
        if name not in SPLITS:
            raise ValidationException(f"Unknown split '{name}', expected one of {SPLITS}")
        return [self.entries[i] for i in self.splits[name]]

    def __len__(self) -> int:
        return len(self.entries)


def load_entry(entry: DatasetEntry, target_height: int, target_width: Optional[int] = None,
               eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC,
               margin: float = DEFAULT_JITTER) -> FaceSample:
    """Load, normalise to `target_height` and fit to `target_width` one entry."""
    landmarks = parse_pts(entry.pts)
    image = load_image_png(entry.image)
    sample = normalize_face(image, landmarks, target_height, 0.0, None, margin, eyebrow_width_frac)
    return fit_width(sample, target_width or target_height, eyebrow_width_frac)


def load_dataset(manifest: DatasetManifest, target_height: int, target_width: Optional[int] = None,
                 split: Optional[str] = None, eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC,
                 failures: Optional[List[Tuple[str, str]]] = None,
                 names: Optional[List[str]] = None) -> List[FaceSample]:
    """
    Load every entry (or one split), skipping unreadable ones with a warning.

    Args:
        failures: If given, receives (path, reason) for each skipped entry
        names: If given, receives the entry name of each loaded sample

    Raises:
        DatasetException: If no entry loads
    """
    entries = manifest.split(split) if split else list(manifest.entries)
    samples = []
    for entry in entries:
        try:
            samples.append(load_entry(entry, target_height, target_width, eyebrow_width_frac))
            if names is not None:
                names.append(entry.name)
        except CascadeSegException as e:
            logger.warning(f"Skipping {entry.pts}: {e}")
            if failures is not None:
                failures.append((entry.pts, str(e)))
    if not samples:
        raise DatasetException(f"No usable samples among {len(entries)} entries in {manifest.root}")
    logger.info(f"Loaded {len(samples)}/{len(entries)} samples from {manifest.root}")
    return samples
