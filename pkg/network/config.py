"""
FCN configuration and the derived layer plan.
"""

from dataclasses import dataclass, field, replace
from typing import FrozenSet, List, NamedTuple, Tuple

from shared.constants import (
    NUM_LANDMARKS,
    NUM_CLASSES,
    IMAGE_CHANNELS,
    STAGE_STRIDE32,
    STAGE_STRIDE16,
    STAGE_STRIDE8,
    STAGE_ORDER,
    FULL_BLOCKS,
    FULL_HEAD_KERNELS,
    FULL_HEAD_WIDTH,
    FULL_TRAIN_SIZE,
    MINI_BLOCKS,
    MINI_HEAD_KERNELS,
    MINI_HEAD_WIDTH,
    MINI_TRAIN_SIZE,
)
from shared.config import RunConfig
from shared.exceptions import ConfigurationException

OUTPUT_CHOICES = (NUM_LANDMARKS, NUM_CLASSES)


class LayerSpec(NamedTuple):
    """One parameterised layer: kind is "conv", "score" or "deconv"."""
    name: str
    kind: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    pad: int


@dataclass(frozen=True)
class FCNConfig:
    """Architecture of one VGG-style FCN (full VGG-16 scale or reduced)."""
    blocks: Tuple[Tuple[int, int], ...] = MINI_BLOCKS
    head_kernels: Tuple[int, int] = MINI_HEAD_KERNELS
    head_width: int = MINI_HEAD_WIDTH
    output_channels: int = NUM_CLASSES
    skip_stages: FrozenSet[str] = field(default_factory=lambda: frozenset({STAGE_STRIDE32}))
    input_channels: int = IMAGE_CHANNELS
    train_size: int = MINI_TRAIN_SIZE

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(block) for block in self.blocks))
        object.__setattr__(self, "head_kernels", tuple(self.head_kernels))
        object.__setattr__(self, "skip_stages", frozenset(self.skip_stages))

    @classmethod
    def full_scale(cls, output_channels: int = NUM_CLASSES,
                   input_channels: int = IMAGE_CHANNELS) -> 'FCNConfig':
        """Full VGG-16 FCN with all three prediction stages."""
        return cls(FULL_BLOCKS, FULL_HEAD_KERNELS, FULL_HEAD_WIDTH, output_channels,
                   frozenset(STAGE_ORDER), input_channels, FULL_TRAIN_SIZE)

    @classmethod
    def mini(cls, output_channels: int = NUM_CLASSES,
             input_channels: int = IMAGE_CHANNELS) -> 'FCNConfig':
        """Reduced three-block network trained on 64 x 64 crops."""
        return cls(output_channels=output_channels, input_channels=input_channels)

    @classmethod
    def from_run_config(cls, run: RunConfig, output_channels: int,
                        input_channels: int = IMAGE_CHANNELS) -> 'FCNConfig':
        """Architecture fields taken from a key=value run config."""
        return cls(run.block_spec, run.head_kernel_pair, run.head_width, output_channels,
                   frozenset({STAGE_STRIDE32}), input_channels, run.image_size)

    @property
    def total_stride(self) -> int:
        return 2 ** len(self.blocks)

    @property
    def final_upsample(self) -> int:
        return 2 ** (len(self.blocks) - 2)

    def with_stages(self, stages) -> 'FCNConfig':
        """Copy with a different set of enabled prediction stages."""
        return replace(self, skip_stages=frozenset(stages))

    def validate(self) -> None:
        """
        Raises:
            ConfigurationException: If the architecture is inconsistent
        """
        if len(self.blocks) < 2:
            raise ConfigurationException(f"Need at least 2 conv blocks, got {len(self.blocks)}")
        if any(count < 1 or width < 1 for count, width in self.blocks):
            raise ConfigurationException(f"Invalid conv blocks: {self.blocks}")
        if any(k < 1 or k % 2 == 0 for k in self.head_kernels):
            raise ConfigurationException(f"Head kernels must be odd and positive: {self.head_kernels}")
        if self.head_width < 1 or self.input_channels < 1:
            raise ConfigurationException("head_width and input_channels must be positive")
        if self.output_channels not in OUTPUT_CHOICES:
            raise ConfigurationException(
                f"output_channels must be one of {OUTPUT_CHOICES}, got {self.output_channels}"
            )
        unknown = self.skip_stages - set(STAGE_ORDER)
        if unknown:
            raise ConfigurationException(f"Unknown skip stages: {sorted(unknown)}")
        if STAGE_STRIDE32 not in self.skip_stages:
            raise ConfigurationException("The stride32 stage is always enabled")
        if STAGE_STRIDE8 in self.skip_stages and STAGE_STRIDE16 not in self.skip_stages:
            raise ConfigurationException("stride8 requires stride16")
        if STAGE_STRIDE8 in self.skip_stages and len(self.blocks) < 3:
            raise ConfigurationException("stride8 requires at least 3 conv blocks")
        if self.train_size % self.total_stride != 0:
            raise ConfigurationException(
                f"train_size {self.train_size} is not divisible by total stride {self.total_stride}"
            )


def conv_layer_names(config: FCNConfig) -> List[str]:
    """conv1_1, conv1_2, conv2_1, ... following the block layout."""
    return [f"conv{b + 1}_{i + 1}"
            for b, (count, _) in enumerate(config.blocks) for i in range(count)]


def layer_plan(config: FCNConfig) -> List[LayerSpec]:
    """Parameterised layers in forward order, named after the VGG-FCN layers."""
    config.validate()
    plan: List[LayerSpec] = []
    channels = config.input_channels
    for b, (count, width) in enumerate(config.blocks):
        for i in range(count):
            plan.append(LayerSpec(f"conv{b + 1}_{i + 1}", "conv", channels, width, 3, 1, 1))
            channels = width

    fc6, fc7 = config.head_kernels
    out = config.output_channels
    plan.append(LayerSpec("fc6_conv", "conv", channels, config.head_width, fc6, 1, fc6 // 2))
    plan.append(LayerSpec("fc7_conv", "conv", config.head_width, config.head_width, fc7, 1, fc7 // 2))
    plan.append(LayerSpec("fc8_conv", "conv", config.head_width, out, 1, 1, 0))
    plan.append(LayerSpec("deconv_32", "deconv", out, out, 4, 2, 1))
    if STAGE_STRIDE16 in config.skip_stages:
        plan.append(LayerSpec("score_pool4", "score", config.blocks[-2][1], out, 1, 1, 0))
    plan.append(LayerSpec("deconv_16", "deconv", out, out, 4, 2, 1))
    if STAGE_STRIDE8 in config.skip_stages:
        plan.append(LayerSpec("score_pool3", "score", config.blocks[-3][1], out, 1, 1, 0))

    factor = config.final_upsample
    if factor > 1:
        plan.append(LayerSpec("deconv_8", "deconv", out, out, 2 * factor, factor, factor // 2))
    else:
        plan.append(LayerSpec("deconv_8", "deconv", out, out, 1, 1, 0))
    return plan


def expected_parameter_count(config: FCNConfig) -> int:
    """Weights plus biases of every layer (deconvolutions carry no bias)."""
    total = 0
    for spec in layer_plan(config):
        total += spec.in_channels * spec.out_channels * spec.kernel ** 2
        if spec.kind != "deconv":
            total += spec.out_channels
    return total
