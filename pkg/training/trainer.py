"""
The three training procedures of the cascade: the landmark heatmap regressor,
the unguided part segmenter and the landmark-guided part segmenter.
"""

import os
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple
import numpy as np

from shared.constants import NUM_LANDMARKS, NUM_CLASSES, DIVERGENCE_LOSS, LOSS_SMOOTHING, IMAGE_CHANNELS
from shared.types import FaceSample, SegMask
from shared.exceptions import (
    ValidationException,
    InvalidStateError,
    TrainingDivergedError,
)
from shared.log import get_logger
from geometry import jitter_sample, occlusion_augment, fold_seven_classes
from heatmap import encode_landmarks, scaled_sigma, image_input, stack_input
from noise import NoiseModel, perturb
from core import Tensor, sigmoid_ce_loss, softmax_ce_loss, sgd_momentum_step, scale_grads
from network import (
    FCNConfig,
    NetworkInstance,
    build_fcn,
    forward,
    enable_stage,
    set_trainable,
    layer_predicate,
    expand_first_layer,
    save_network,
)
from training.plan import TrainPlan, TrainStage, TASK_LANDMARKS, TASK_UNGUIDED, TASK_GUIDED
from training.history import LossRecord, TrainResult
from training.stream import SampleStream, PrepareFn

logger = get_logger("TRAIN")


@dataclass(frozen=True)
class TrainItem:
    """A prepared network input with its target (heatmap stack or label grid)."""
    inputs: Tensor
    target: np.ndarray


LossFn = Callable[[NetworkInstance, TrainItem], Tuple[Tensor, float]]


def init_rng(plan: TrainPlan) -> np.random.Generator:
    """Generator for weight initialisation, independent of the sample stream."""
    return np.random.default_rng([plan.seed, 1])


def heatmap_sigma(plan: TrainPlan, height: int) -> float:
    return plan.sigma if plan.sigma > 0 else scaled_sigma(height)


def landmark_loss_scale(plan: TrainPlan, height: int, width: int) -> float:
    return plan.loss_scale if plan.loss_scale > 0 else NUM_LANDMARKS / (height * width)


def segmentation_labels(mask: SegMask, num_classes: int) -> np.ndarray:
    if num_classes == 7:
        return fold_seven_classes(mask).labels
    return mask.labels


def _augment(sample: FaceSample, plan: TrainPlan,
             rng: np.random.Generator) -> Tuple[np.ndarray, FaceSample]:
    if plan.jitter > 0:
        sample = jitter_sample(sample, plan.jitter, rng, plan.eyebrow_width_frac)
    image = occlusion_augment(sample.image, sample.mask, plan.occlusion_prob, rng)
    return image, sample


def landmark_items(plan: TrainPlan) -> PrepareFn:
    """Augmented RGB input with its 68-channel heatmap target."""
    def prepare(sample: FaceSample, rng: np.random.Generator) -> TrainItem:
        image, sample = _augment(sample, plan, rng)
        heatmaps = encode_landmarks(sample.landmarks, sample.width, sample.height,
                                    heatmap_sigma(plan, sample.height))
        return TrainItem(image_input(image), heatmaps.data)
    return prepare


def unguided_items(plan: TrainPlan) -> PrepareFn:
    """Augmented RGB input with its part labels."""
    def prepare(sample: FaceSample, rng: np.random.Generator) -> TrainItem:
        image, sample = _augment(sample, plan, rng)
        return TrainItem(image_input(image), segmentation_labels(sample.mask, plan.num_classes))
    return prepare


def guided_items(plan: TrainPlan, noise: NoiseModel) -> PrepareFn:
    """
    Augmented 71-channel input whose guidance encodes groundtruth landmarks
    perturbed by the noise model, with the part labels of the clean sample.
    """
    def prepare(sample: FaceSample, rng: np.random.Generator) -> TrainItem:
        image, sample = _augment(sample, plan, rng)
        guidance = perturb(sample.landmarks, noise, rng)
        heatmaps = encode_landmarks(guidance, sample.width, sample.height,
                                    heatmap_sigma(plan, sample.height))
        return TrainItem(stack_input(image, heatmaps),
                         segmentation_labels(sample.mask, plan.num_classes))
    return prepare


def landmark_loss(plan: TrainPlan) -> LossFn:
    def loss(net: NetworkInstance, item: TrainItem) -> Tuple[Tensor, float]:
        scores = forward(net, item.inputs)
        _, height, width = scores.shape
        return sigmoid_ce_loss(scores, item.target, landmark_loss_scale(plan, height, width)), 1.0
    return loss


def segmentation_loss(plan: TrainPlan) -> LossFn:
    multiplier = plan.loss_scale if plan.loss_scale > 0 else 1.0

    def loss(net: NetworkInstance, item: TrainItem) -> Tuple[Tensor, float]:
        return softmax_ce_loss(forward(net, item.inputs), item.target), multiplier
    return loss


def evaluate_loss(net: NetworkInstance, items: Sequence[TrainItem], loss_fn: LossFn) -> float:
    """Mean scaled loss over fixed items, without touching any gradient."""
    total = 0.0
    for item in items:
        value, multiplier = loss_fn(net, item)
        total += multiplier * value.item()
    return total / len(items)


def _check_data(data: Sequence[FaceSample], net: NetworkInstance) -> None:
    if not data:
        raise ValidationException("Training data is empty")
    stride = net.config.total_stride
    for index, sample in enumerate(data):
        if sample.height % stride or sample.width % stride:
            raise ValidationException(
                f"Sample {index} is {sample.height}x{sample.width}, not divisible by stride {stride}"
            )


def _enter_stage(net: NetworkInstance, stage: TrainStage) -> NetworkInstance:
    for name in sorted(stage.skip_stages - net.config.skip_stages):
        net = enable_stage(net, name)
    set_trainable(net, layer_predicate(stage.trainable))
    return net


def _checkpoint(net: NetworkInstance, plan: TrainPlan, task: str, iteration: int) -> None:
    directory = plan.checkpoint_dir or "."
    os.makedirs(directory, exist_ok=True)
    save_network(net, os.path.join(directory, f"{task}_{iteration:07d}.cseg"))


def run_plan(net: NetworkInstance, data: Sequence[FaceSample], plan: TrainPlan,
             prepare: PrepareFn, loss_fn: LossFn, task: str) -> TrainResult:
    """
    Run every stage of `plan` in order, enabling skip stages and freezing layers
    as each stage requires, with one SGD step per iteration.

    Raises:
        TrainingDivergedError: If the loss exceeds 1e6 or is not finite
    """
    plan.validate()
    _check_data(data, net)
    rng = np.random.default_rng(plan.seed)
    history: List[LossRecord] = []
    iteration = 0
    count = plan.total_iterations * plan.batch_size

    with SampleStream(data, prepare, rng, count, plan.threaded, plan.queue_size) as stream:
        for stage in plan.stages:
            net = _enter_stage(net, stage)
            params = net.parameters()
            logger.info(f"{task}: stage {stage.label} for {stage.iterations} iterations, "
                        f"training {net.trainable_layers()}")
            running = None
            for _ in range(stage.iterations):
                iteration += 1
                loss = 0.0
                for _ in range(plan.batch_size):
                    value, multiplier = loss_fn(net, stream.next())
                    value.backward(np.asarray(multiplier, dtype=value.dtype))
                    loss += multiplier * value.item()
                loss /= plan.batch_size
                if plan.batch_size > 1:
                    scale_grads(params, 1.0 / plan.batch_size)
                if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
                    raise TrainingDivergedError(stage.label, iteration, loss)

                sgd_momentum_step(params, plan.learning_rate, plan.momentum)
                history.append(LossRecord(iteration, stage.label, loss))
                running = loss if running is None else (1 - LOSS_SMOOTHING) * running + LOSS_SMOOTHING * loss
                if iteration % plan.log_every == 0:
                    logger.info(f"{task}: iter {iteration} [{stage.label}] loss {loss:.5f} "
                                f"(smoothed {running:.5f})")
                if plan.checkpoint_every and iteration % plan.checkpoint_every == 0:
                    _checkpoint(net, plan, task, iteration)
            logger.info(f"{task}: stage {stage.label} done, smoothed loss {running:.5f}")
    return TrainResult(net, history)


def train_landmark_net(data: Sequence[FaceSample], plan: TrainPlan,
                       config: Optional[FCNConfig] = None) -> TrainResult:
    """
    Train a 68-output network to regress Gaussian landmark heatmaps with sigmoid
    cross-entropy. The network is built from `config` (mini by default) and
    initialised from the plan seed.

    Raises:
        ValidationException: If the config does not have 68 outputs
    """
    config = config or FCNConfig.mini(NUM_LANDMARKS)
    if config.output_channels != NUM_LANDMARKS:
        raise ValidationException(f"Landmark network needs {NUM_LANDMARKS} outputs")
    net = build_fcn(config, init_rng(plan))
    return run_plan(net, data, plan, landmark_items(plan), landmark_loss(plan), TASK_LANDMARKS)


def train_unguided_seg(data: Sequence[FaceSample], plan: TrainPlan,
                       config: Optional[FCNConfig] = None) -> TrainResult:
    """
    Train an 8-output RGB network with per-pixel softmax cross-entropy, stride32
    then stride16 then stride8, each stage warm-starting the next.
    """
    config = config or FCNConfig.mini(NUM_CLASSES)
    if config.output_channels != NUM_CLASSES:
        raise ValidationException(f"Segmentation network needs {NUM_CLASSES} outputs")
    if config.input_channels != IMAGE_CHANNELS:
        raise ValidationException("The unguided segmenter takes RGB input")
    net = build_fcn(config, init_rng(plan))
    return run_plan(net, data, plan, unguided_items(plan), segmentation_loss(plan), TASK_UNGUIDED)


def train_guided_seg(data: Sequence[FaceSample], base: NetworkInstance, noise: NoiseModel,
                     plan: TrainPlan) -> TrainResult:
    """
    Initialise from a trained unguided network, expand its first layer by 68 zero
    guidance channels and train on noise-perturbed groundtruth guidance. `base`
    itself is left untouched.

    Raises:
        InvalidStateError: If `base` is already guided or not a segmenter
    """
    if base.config.output_channels != NUM_CLASSES:
        raise InvalidStateError("Guided training starts from an 8-output segmenter")
    net = expand_first_layer(base, NUM_LANDMARKS)
    return run_plan(net, data, plan, guided_items(plan, noise), segmentation_loss(plan), TASK_GUIDED)
