"""
Training plans: ordered stages with iteration budgets, enabled skip stages and
the layers each stage may update.
"""

from dataclasses import dataclass, replace
from typing import FrozenSet, Optional, Sequence, Tuple

from shared.constants import (
    NUM_CLASSES,
    STAGE_STRIDE32,
    STAGE_ORDER,
    STAGE_BUDGET_SPLIT,
    OCCLUSION_PROB,
    DEFAULT_JITTER,
    EYEBROW_WIDTH_FRAC,
    LOG_EVERY,
    FULL_LEARNING_RATE,
    FULL_MOMENTUM,
    FULL_SIGMOID_LOSS_SCALE,
    FULL_LANDMARK_ITERATIONS,
    FULL_SEGMENTATION_ITERATIONS,
    FULL_WARMUP_ITERATIONS,
    MINI_LEARNING_RATE,
    MINI_LANDMARK_ITERATIONS,
    MINI_SEGMENTATION_ITERATIONS,
    MINI_GUIDED_ITERATIONS,
    MINI_WARMUP_ITERATIONS,
    MINI_BLOCKS,
    FULL_BLOCKS,
)
from shared.config import RunConfig
from shared.exceptions import ConfigurationException

TASK_LANDMARKS = "landmarks"
TASK_UNGUIDED = "unguided"
TASK_GUIDED = "guided"
TASKS = (TASK_LANDMARKS, TASK_UNGUIDED, TASK_GUIDED)


@dataclass(frozen=True)
class TrainStage:
    """One stage: the skip stages it runs with, its budget and its trainable layers."""
    skip_stages: FrozenSet[str]
    iterations: int
    trainable: str = "all"
    name: str = ""

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return [s for s in STAGE_ORDER if s in self.skip_stages][-1]


def stage_budgets(total: int, count: int) -> Tuple[int, ...]:
    """
    Split `total` iterations over `count` stride stages in the 40/30/30 ratio,
    renormalised when fewer stages exist. The last stage takes the remainder.

    Raises:
        ConfigurationException: If some stage would get no iterations
    """
    shares = STAGE_BUDGET_SPLIT[:count]
    norm = sum(shares)
    budgets = [int(round(total * share / norm)) for share in shares[:-1]]
    budgets.append(total - sum(budgets))
    if min(budgets) <= 0:
        raise ConfigurationException(f"{total} iterations cannot cover {count} stages")
    return tuple(budgets)


def staged_stages(total: int, num_blocks: int) -> Tuple[TrainStage, ...]:
    """stride32 -> stride16 -> stride8 stages, as many as the block count supports."""
    count = min(len(STAGE_ORDER), num_blocks)
    stages = []
    for i, budget in enumerate(stage_budgets(total, count)):
        stages.append(TrainStage(frozenset(STAGE_ORDER[:i + 1]), budget))
    return tuple(stages)


def guided_stages(warmup: int, total: int, skip_stages: Sequence[str]) -> Tuple[TrainStage, ...]:
    """First-layer warm-up followed by training of every layer."""
    enabled = frozenset(skip_stages)
    return (TrainStage(enabled, warmup, "first", "warmup"),
            TrainStage(enabled, total, "all", "guided"))


@dataclass(frozen=True)
class TrainPlan:
    """
    Hyperparameters of one training run.

    `loss_scale` = 0 derives the landmark scale from the input size (68 / (H W));
    `sigma` = 0 derives the heatmap width from the training height.
    """
    stages: Tuple[TrainStage, ...]
    learning_rate: float = MINI_LEARNING_RATE
    momentum: float = FULL_MOMENTUM
    loss_scale: float = 0.0
    batch_size: int = 1
    seed: int = 42
    sigma: float = 0.0
    occlusion_prob: float = OCCLUSION_PROB
    jitter: float = DEFAULT_JITTER
    eyebrow_width_frac: float = EYEBROW_WIDTH_FRAC
    num_classes: int = NUM_CLASSES
    log_every: int = LOG_EVERY
    checkpoint_every: int = 0
    checkpoint_dir: Optional[str] = None
    threaded: bool = False
    queue_size: int = 8

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def total_iterations(self) -> int:
        return sum(stage.iterations for stage in self.stages)

    def with_overrides(self, **changes) -> 'TrainPlan':
        return replace(self, **changes)

    def without_augmentation(self) -> 'TrainPlan':
        return replace(self, occlusion_prob=0.0, jitter=0.0)

    def validate(self) -> None:
        """
        Raises:
            ConfigurationException: On empty plans, non-positive budgets, stages that
                drop a skip stage, or invalid hyperparameters
        """
        if not self.stages:
            raise ConfigurationException("Training plan has no stages")
        previous: FrozenSet[str] = frozenset()
        for stage in self.stages:
            if stage.iterations <= 0:
                raise ConfigurationException(f"Stage {stage.label} has budget {stage.iterations}")
            if STAGE_STRIDE32 not in stage.skip_stages or not stage.skip_stages <= set(STAGE_ORDER):
                raise ConfigurationException(f"Invalid skip stages {sorted(stage.skip_stages)}")
            if not previous <= stage.skip_stages:
                raise ConfigurationException(
                    f"Stage {stage.label} drops {sorted(previous - stage.skip_stages)}; "
                    f"stages must run coarse to fine"
                )
            previous = stage.skip_stages
        if self.learning_rate <= 0 or not 0.0 <= self.momentum < 1.0:
            raise ConfigurationException("learning_rate must be > 0 and momentum in [0, 1)")
        if self.loss_scale < 0 or self.sigma < 0:
            raise ConfigurationException("loss_scale and sigma must not be negative")
        if self.batch_size < 1 or self.log_every < 1 or self.queue_size < 1:
            raise ConfigurationException("batch_size, log_every and queue_size must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigurationException("checkpoint_every must not be negative")
        if not 0.0 <= self.occlusion_prob <= 1.0 or not 0.0 <= self.jitter < 0.5:
            raise ConfigurationException("occlusion_prob must be in [0, 1] and jitter in [0, 0.5)")
        if self.num_classes not in (7, 8):
            raise ConfigurationException(f"num_classes must be 7 or 8, got {self.num_classes}")

    @classmethod
    def mini_defaults(cls, task: str, num_blocks: int = len(MINI_BLOCKS), **overrides) -> 'TrainPlan':
        """Desk-scale budgets and rates for the reduced network."""
        if task == TASK_LANDMARKS:
            stages = staged_stages(MINI_LANDMARK_ITERATIONS, num_blocks)
        elif task == TASK_UNGUIDED:
            stages = staged_stages(MINI_SEGMENTATION_ITERATIONS, num_blocks)
        elif task == TASK_GUIDED:
            stages = guided_stages(MINI_WARMUP_ITERATIONS, MINI_GUIDED_ITERATIONS,
                                   STAGE_ORDER[:min(len(STAGE_ORDER), num_blocks)])
        else:
            raise ConfigurationException(f"Unknown task '{task}', expected one of {TASKS}")
        overrides.setdefault("loss_scale", 0.0 if task == TASK_LANDMARKS else 1.0)
        return cls(stages=stages, **overrides)

    @classmethod
    def full_scale_defaults(cls, task: str, **overrides) -> 'TrainPlan':
        """Full-scale rates and budgets: lr 1e-4, momentum 0.9, 400k/300k iterations."""
        num_blocks = len(FULL_BLOCKS)
        if task == TASK_LANDMARKS:
            stages = staged_stages(FULL_LANDMARK_ITERATIONS, num_blocks)
            loss_scale = FULL_SIGMOID_LOSS_SCALE
        elif task == TASK_UNGUIDED:
            stages = staged_stages(FULL_SEGMENTATION_ITERATIONS, num_blocks)
            loss_scale = 1.0
        elif task == TASK_GUIDED:
            stages = guided_stages(FULL_WARMUP_ITERATIONS, FULL_SEGMENTATION_ITERATIONS, STAGE_ORDER)
            loss_scale = 1.0
        else:
            raise ConfigurationException(f"Unknown task '{task}', expected one of {TASKS}")
        overrides.setdefault("learning_rate", FULL_LEARNING_RATE)
        overrides.setdefault("momentum", FULL_MOMENTUM)
        overrides.setdefault("loss_scale", loss_scale)
        return cls(stages=stages, **overrides)

    @classmethod
    def from_run_config(cls, run: RunConfig, task: str, seed: Optional[int] = None) -> 'TrainPlan':
        """Plan for one task from a run config (budgets, rates, augmentation, threading)."""
        num_blocks = len(run.block_spec)
        if task == TASK_LANDMARKS:
            stages = staged_stages(run.landmark_iterations, num_blocks)
            loss_scale = run.landmark_loss_scale
        elif task == TASK_UNGUIDED:
            stages = staged_stages(run.unguided_iterations, num_blocks)
            loss_scale = run.segmentation_loss_scale
        elif task == TASK_GUIDED:
            stages = guided_stages(run.warmup_iterations, run.guided_iterations,
                                   STAGE_ORDER[:min(len(STAGE_ORDER), num_blocks)])
            loss_scale = run.segmentation_loss_scale
        else:
            raise ConfigurationException(f"Unknown task '{task}', expected one of {TASKS}")
        return cls(
            stages=stages,
            learning_rate=run.learning_rate,
            momentum=run.momentum,
            loss_scale=loss_scale,
            batch_size=run.batch_size,
            seed=run.seed if seed is None else seed,
            sigma=run.sigma,
            occlusion_prob=run.occlusion_prob,
            jitter=run.jitter,
            eyebrow_width_frac=run.eyebrow_width_frac,
            num_classes=run.num_classes,
            log_every=run.log_every,
            checkpoint_every=run.checkpoint_every,
            threaded=not run.deterministic,
        )
