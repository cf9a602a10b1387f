"""
Run configuration loaded from plain-text key=value files.
"""

import dataclasses
import hashlib
import os
from dataclasses import dataclass, fields
from typing import Any, Dict, Optional, Tuple

from shared.constants import (
    MINI_TRAIN_SIZE,
    MINI_HEAD_WIDTH,
    SYNTH_TRAIN_COUNT,
    SYNTH_TEST_COUNT,
    SYNTH_AMPLITUDE,
    SYNTH_TEXTURE_NOISE,
    VALIDATION_FRACTION,
    EYEBROW_WIDTH_FRAC,
    OCCLUSION_PROB,
    DEFAULT_JITTER,
    NUM_CLASSES,
    MINI_LEARNING_RATE,
    FULL_MOMENTUM,
    MINI_LANDMARK_ITERATIONS,
    MINI_SEGMENTATION_ITERATIONS,
    MINI_GUIDED_ITERATIONS,
    MINI_WARMUP_ITERATIONS,
    LOG_EVERY,
)
from shared.exceptions import ConfigurationException

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    """Every tunable of a cascadeseg run. Zero-valued scales/sigma mean "derive from size"."""
    seed: int = 42
    deterministic: bool = False
    threads: int = 0

    # data
    image_size: int = MINI_TRAIN_SIZE
    train_count: int = SYNTH_TRAIN_COUNT
    test_count: int = SYNTH_TEST_COUNT
    val_fraction: float = VALIDATION_FRACTION
    synth_amplitude: float = SYNTH_AMPLITUDE
    synth_texture_noise: float = SYNTH_TEXTURE_NOISE
    eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC
    occlusion_prob: float = OCCLUSION_PROB
    jitter: float = DEFAULT_JITTER
    sigma: float = 0.0
    num_classes: int = NUM_CLASSES

    # network
    blocks: str = "2x16,2x32,3x64"
    head_kernels: str = "3,1"
    head_width: int = MINI_HEAD_WIDTH

    # training
    landmark_iterations: int = MINI_LANDMARK_ITERATIONS
    unguided_iterations: int = MINI_SEGMENTATION_ITERATIONS
    guided_iterations: int = MINI_GUIDED_ITERATIONS
    warmup_iterations: int = MINI_WARMUP_ITERATIONS
    learning_rate: float = MINI_LEARNING_RATE
    momentum: float = FULL_MOMENTUM
    landmark_loss_scale: float = 0.0
    segmentation_loss_scale: float = 1.0
    batch_size: int = 1
    checkpoint_every: int = 0
    log_every: int = LOG_EVERY
    full_covariance: bool = False

    @property
    def block_spec(self) -> Tuple[Tuple[int, int], ...]:
        """Parsed `blocks`, e.g. "2x16,2x32" -> ((2, 16), (2, 32))."""
        return parse_blocks(self.blocks)

    @property
    def head_kernel_pair(self) -> Tuple[int, int]:
        """Parsed `head_kernels`, e.g. "3,1" -> (3, 1)."""
        try:
            fc6, fc7 = (int(part) for part in self.head_kernels.split(","))
        except ValueError as e:
            raise ConfigurationException(f"Invalid head_kernels: {self.head_kernels!r}") from e
        return fc6, fc7

    def validate(self) -> None:
        """
        Check value ranges.

        Raises:
            ConfigurationException: If any value is out of range
        """
        positive = ["image_size", "train_count", "test_count", "head_width",
                    "landmark_iterations", "unguided_iterations", "guided_iterations",
                    "warmup_iterations", "batch_size", "log_every"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigurationException(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigurationException(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if not 0.0 <= self.jitter < 0.5:
            raise ConfigurationException(f"jitter must be in [0, 0.5), got {self.jitter}")
        if not 0.0 <= self.occlusion_prob <= 1.0:
            raise ConfigurationException(f"occlusion_prob must be in [0, 1], got {self.occlusion_prob}")
        if self.num_classes not in (7, 8):
            raise ConfigurationException(f"num_classes must be 7 or 8, got {self.num_classes}")
        if self.learning_rate <= 0 or not 0.0 <= self.momentum < 1.0:
            raise ConfigurationException("learning_rate must be > 0 and momentum in [0, 1)")
        if self.sigma < 0 or self.landmark_loss_scale < 0 or self.segmentation_loss_scale <= 0:
            raise ConfigurationException("sigma and loss scales must not be negative")
        if self.threads < 0 or self.checkpoint_every < 0:
            raise ConfigurationException("threads and checkpoint_every must not be negative")
        if not parse_blocks(self.blocks) or min(self.head_kernel_pair) <= 0:
            raise ConfigurationException("blocks and head_kernels must be non-empty and positive")

    def with_overrides(self, **overrides: Any) -> 'RunConfig':
        """Copy with some fields replaced (None values are ignored)."""
        changes = {key: value for key, value in overrides.items() if value is not None}
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Canonical key=value rendering, one field per line."""
        lines = []
        for field in fields(self):
            value = getattr(self, field.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{field.name}={value}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        """SHA-256 of the canonical text."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def parse_blocks(text: str) -> Tuple[Tuple[int, int], ...]:
    """Parse "count x width" block descriptors separated by commas."""
    blocks = []
    try:
        for part in text.split(","):
            count, width = part.strip().lower().split("x")
            blocks.append((int(count), int(width)))
    except ValueError as e:
        raise ConfigurationException(f"Invalid blocks descriptor: {text!r}") from e
    return tuple(blocks)


def _coerce(name: str, raw: str, kind: Any) -> Any:
    if kind is bool or kind == "bool":
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigurationException(f"{name} expects a boolean, got {raw!r}")
    try:
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
    except ValueError as e:
        raise ConfigurationException(f"{name} expects {kind}, got {raw!r}") from e
    return raw


def parse_config_text(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    """
    Parse key=value text on top of `base` (defaults when None).

    Raises:
        ConfigurationException: On malformed lines, unknown keys or bad values
    """
    config = base or RunConfig()
    kinds: Dict[str, Any] = {field.name: field.type for field in fields(RunConfig)}
    updates: Dict[str, Any] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationException(f"Line {line_no}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in kinds:
            raise ConfigurationException(f"Line {line_no}: unknown key {key!r}")
        updates[key] = _coerce(key, raw, kinds[key])
    config = dataclasses.replace(config, **updates)
    config.validate()
    return config


def load_config(path: Optional[str], base: Optional[RunConfig] = None) -> RunConfig:
    """
    Load a key=value config file. A None path yields the defaults.

    Raises:
        ConfigurationException: If the file is missing or invalid
    """
    if path is None:
        config = base or RunConfig()
        config.validate()
        return config
    if not os.path.exists(path):
        raise ConfigurationException(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), base)
