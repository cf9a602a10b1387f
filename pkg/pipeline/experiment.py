"""
End-to-end four-method experiment: landmark detector, connected-landmarks
baseline, unguided segmenter and guided segmenter (fed groundtruth or detected
landmarks), evaluated with per-class IoU.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, TypeVar
import numpy as np

from shared.constants import (
    NUM_LANDMARKS,
    NUM_CLASSES,
    CLASS_NAMES,
    THREADS_ENV,
    REFERENCE_LANDMARK_ERROR,
    TEST_FRACTION,
)
from shared.config import RunConfig
from shared.types import FaceSample, LandmarkSet, SegMask
from shared.exceptions import CascadeSegException, StageFailedError
from shared.log import get_logger
from geometry import landmarks_to_mask, fold_seven_classes
from heatmap import HeatmapStack, encode_landmarks, decode_heatmaps, image_input, stack_input, scaled_sigma
from noise import NoiseModel, fit_noise_model, save_noise_model
from core import stable_sigmoid
from network import FCNConfig, NetworkInstance, forward, save_network
from training import (
    TrainPlan,
    TrainResult,
    TASK_LANDMARKS,
    TASK_UNGUIDED,
    TASK_GUIDED,
    train_landmark_net,
    train_unguided_seg,
    train_guided_seg,
    write_loss_csv,
)
from metrics import (
    IoUReport,
    ComparisonTable,
    LandmarkErrorReport,
    iou,
    compare_methods,
    landmark_error_report,
    write_landmark_error_csv,
    write_per_image_csv,
    METHOD_UNGUIDED,
    METHOD_CONNECTED,
    METHOD_GUIDED_GT,
    METHOD_GUIDED_DETECTED,
)
from pipeline.synth import SynthSpec, synth_faces, sample_stem
from pipeline.dataset import DatasetManifest, load_dataset, split_indices, SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST

logger = get_logger("EXPERIMENT")

T = TypeVar("T")


@dataclass
class ExperimentData:
    """Disjoint training, validation (noise fitting) and test samples."""
    train: List[FaceSample]
    val: List[FaceSample]
    test: List[FaceSample]
    test_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.test_names:
            self.test_names = [sample_stem(i) for i in range(len(self.test))]


@dataclass
class ExperimentResult:
    table: ComparisonTable
    landmark_errors: LandmarkErrorReport
    per_image: Dict[str, List[IoUReport]]
    noise: NoiseModel
    histories: Dict[str, TrainResult]


def worker_count(run: RunConfig) -> int:
    """Evaluation threads: 1 when deterministic, else config, env, or CPU count."""
    if run.deterministic:
        return 1
    if run.threads > 0:
        return run.threads
    env = os.environ.get(THREADS_ENV, "")
    if env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[int], T], count: int, workers: int) -> List[T]:
    """fn(0..count-1), fanned out over threads, returned in index order."""
    if workers <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def stage_seeds(seed: int) -> Dict[str, int]:
    """Independent seeds for every randomised step of a run."""
    names = ["synth_train", "synth_test", "split", TASK_LANDMARKS, TASK_UNGUIDED, TASK_GUIDED]
    states = np.random.SeedSequence(seed).generate_state(len(names))
    return {name: int(state) for name, state in zip(names, states)}


def synth_experiment_data(run: RunConfig) -> ExperimentData:
    """Seeded synthetic train/test sets with a validation slice of the training set."""
    seeds = stage_seeds(run.seed)
    common = dict(size=run.image_size, amplitude=run.synth_amplitude,
                  texture_noise=run.synth_texture_noise, stride=2 ** len(run.block_spec),
                  eyebrow_width_frac=run.eyebrow_width_frac)
    train_all = synth_faces(SynthSpec(run.train_count, seed=seeds["synth_train"], **common))
    test = synth_faces(SynthSpec(run.test_count, seed=seeds["synth_test"], **common))
    splits = split_indices(len(train_all), run.val_fraction, 0.0, seeds["split"])
    return ExperimentData(
        train=[train_all[i] for i in splits[SPLIT_TRAIN]],
        val=[train_all[i] for i in splits[SPLIT_VAL]],
        test=test,
    )


def directory_experiment_data(run: RunConfig, root: str,
                              test_fraction: float = TEST_FRACTION) -> ExperimentData:
    """
    Split a directory of image + pts pairs into seeded train/val/test sets and
    load each at `run.image_size` (square inputs).

    Raises:
        DatasetException: If a split loads no sample
    """
    manifest = DatasetManifest.from_directory(root, stage_seeds(run.seed)["split"],
                                              run.val_fraction, test_fraction)
    splits = {}
    test_names: List[str] = []
    for name in (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST):
        names = test_names if name == SPLIT_TEST else None
        splits[name] = load_dataset(manifest, run.image_size, run.image_size, name,
                                    run.eyebrow_width_frac, names=names)
    return ExperimentData(splits[SPLIT_TRAIN], splits[SPLIT_VAL], splits[SPLIT_TEST], test_names)


def experiment_data(run: RunConfig, data_dir: Optional[str] = None) -> ExperimentData:
    """Real data when `data_dir` is given, otherwise the seeded synthetic benchmark."""
    if data_dir:
        return directory_experiment_data(run, data_dir)
    return synth_experiment_data(run)


def heatmaps_from_scores(scores: np.ndarray) -> HeatmapStack:
    return HeatmapStack(stable_sigmoid(scores).astype(np.float64))


def detect_landmarks(net: NetworkInstance, images: Sequence[np.ndarray], workers: int = 1) -> List[LandmarkSet]:
    """Decode the landmark network's heatmaps for every image."""
    def detect(index: int) -> LandmarkSet:
        scores = forward(net, image_input(images[index])).values
        return decode_heatmaps(heatmaps_from_scores(scores))
    return ordered_map(detect, len(images), workers)


def predict_mask(net: NetworkInstance, inputs, num_classes: int = NUM_CLASSES) -> SegMask:
    """Per-pixel argmax over the first `num_classes` scores."""
    scores = forward(net, inputs).values[:num_classes]
    return SegMask.from_labels(np.argmax(scores, axis=0).astype(np.uint8))


def evaluate_four_methods(test: Sequence[FaceSample], unguided: NetworkInstance,
                          guided: NetworkInstance, detections: Sequence[LandmarkSet],
                          sigma: float, eyebrow_width_frac: float, workers: int = 1,
                          num_classes: int = NUM_CLASSES) -> Dict[str, List[SegMask]]:
    """
    Predicted masks of every method on every test sample. Guided-by-groundtruth
    encodes the test landmarks; guided-by-detected encodes `detections`.
    """
    if len(detections) != len(test):
        raise CascadeSegException(f"{len(detections)} detections for {len(test)} test samples")

    def guided_mask(sample: FaceSample, landmarks: LandmarkSet) -> SegMask:
        heatmaps = encode_landmarks(landmarks, sample.width, sample.height, sigma)
        return predict_mask(guided, stack_input(sample.image, heatmaps), num_classes)

    def evaluate(index: int) -> Dict[str, SegMask]:
        sample = test[index]
        return {
            METHOD_UNGUIDED: predict_mask(unguided, image_input(sample.image), num_classes),
            METHOD_CONNECTED: landmarks_to_mask(detections[index], sample.width, sample.height,
                                                eyebrow_width_frac),
            METHOD_GUIDED_GT: guided_mask(sample, sample.landmarks),
            METHOD_GUIDED_DETECTED: guided_mask(sample, detections[index]),
        }

    per_sample = ordered_map(evaluate, len(test), workers)
    methods = (METHOD_UNGUIDED, METHOD_CONNECTED, METHOD_GUIDED_GT, METHOD_GUIDED_DETECTED)
    return {method: [masks[method] for masks in per_sample] for method in methods}


def class_names_for(num_classes: int) -> tuple:
    """Column names; in seven-class mode background is folded into skin."""
    return CLASS_NAMES if num_classes == NUM_CLASSES else CLASS_NAMES[1:]


def score_predictions(predictions: Dict[str, List[SegMask]], test: Sequence[FaceSample],
                      num_classes: int = NUM_CLASSES) -> Dict[str, List[IoUReport]]:
    """
    Per-image IoU of every method. In seven-class mode the groundtruth and the
    connected-landmarks masks are folded to match the segmenters' labels.
    """
    def truth(sample: FaceSample) -> SegMask:
        return sample.mask if num_classes == NUM_CLASSES else fold_seven_classes(sample.mask)

    scores = {}
    for method, masks in predictions.items():
        if method == METHOD_CONNECTED and num_classes != NUM_CLASSES:
            masks = [fold_seven_classes(m) for m in masks]
        scores[method] = [iou(pred, truth(sample), num_classes) for pred, sample in zip(masks, test)]
    return scores


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Label any failure inside the block with the stage name."""
    logger.info(f"=== {name} ===")
    try:
        yield
    except StageFailedError:
        raise
    except (CascadeSegException, OSError, ValueError) as e:
        raise StageFailedError(name, str(e)) from e


def output_layout(out_dir: str) -> Dict[str, str]:
    paths = {name: os.path.join(out_dir, name) for name in ("checkpoints", "logs", "results")}
    for path in paths.values():
        os.makedirs(path, exist_ok=True)
    return paths


def write_run_manifest(path: str, run: RunConfig, seeds: Dict[str, int], data: ExperimentData) -> None:
    lines = [
        f"seed={run.seed}",
        f"deterministic={'true' if run.deterministic else 'false'}",
        f"config_hash={run.config_hash()}",
        f"train_samples={len(data.train)}",
        f"val_samples={len(data.val)}",
        f"test_samples={len(data.test)}",
    ]
    lines.extend(f"seed.{name}={value}" for name, value in seeds.items())
    lines.append("")
    lines.append("[config]")
    text = run.to_text()
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n" + text)


def evaluate_landmark_net(net: NetworkInstance, data: ExperimentData, results_dir: str,
                          workers: int = 1) -> tuple:
    """
    Detect landmarks on the test split and write landmark_error.csv.

    Returns:
        (detections, LandmarkErrorReport)
    """
    detections = detect_landmarks(net, [s.image for s in data.test], workers)
    errors = landmark_error_report(detections, [s.landmarks for s in data.test])
    write_landmark_error_csv(os.path.join(results_dir, "landmark_error.csv"), errors, data.test_names)
    logger.info(f"Mean normalised landmark error {errors.mean:.4f} "
                f"(full-scale reference {REFERENCE_LANDMARK_ERROR})")
    return detections, errors


def evaluate_segmenters(run: RunConfig, data: ExperimentData, unguided: NetworkInstance,
                        guided: NetworkInstance, detections: Sequence[LandmarkSet],
                        results_dir: str, workers: int = 1) -> tuple:
    """
    Score all four methods on the test split and write comparison.csv and
    per_image_iou.csv.

    Returns:
        (ComparisonTable, per-image IoU reports by method)
    """
    sigma = run.sigma if run.sigma > 0 else scaled_sigma(data.test[0].height)
    predictions = evaluate_four_methods(data.test, unguided, guided, detections,
                                        sigma, run.eyebrow_width_frac, workers, run.num_classes)
    per_image = score_predictions(predictions, data.test, run.num_classes)
    class_names = class_names_for(run.num_classes)
    table = compare_methods(per_image, class_names)
    table.write_csv(os.path.join(results_dir, "comparison.csv"))
    write_per_image_csv(os.path.join(results_dir, "per_image_iou.csv"), per_image,
                        data.test_names, class_names)
    for method in table.methods:
        logger.info(f"{method:>20}: mean IoU {table.mean_iou[method]:.4f}")
    return table, per_image


def _plan(run: RunConfig, task: str, seed: int, checkpoint_dir: str) -> TrainPlan:
    return TrainPlan.from_run_config(run, task, seed).with_overrides(checkpoint_dir=checkpoint_dir)


def checkpoint_path(out_dir: str, task: str) -> str:
    return os.path.join(out_dir, "checkpoints", f"{task}.cseg")


def noise_model_path(out_dir: str) -> str:
    return os.path.join(out_dir, "checkpoints", "noise_model.txt")


def _keep(result: TrainResult, task: str, out_dir: str) -> TrainResult:
    save_network(result.network, checkpoint_path(out_dir, task))
    write_loss_csv(os.path.join(out_dir, "logs", f"loss_{task}.csv"), result.history)
    return result


def train_landmarks_step(run: RunConfig, data: ExperimentData, out_dir: str) -> TrainResult:
    """Train the detector; writes checkpoints/landmarks.cseg and logs/loss_landmarks.csv."""
    paths = output_layout(out_dir)
    plan = _plan(run, TASK_LANDMARKS, stage_seeds(run.seed)[TASK_LANDMARKS], paths["checkpoints"])
    result = train_landmark_net(data.train, plan, FCNConfig.from_run_config(run, NUM_LANDMARKS))
    return _keep(result, TASK_LANDMARKS, out_dir)


def train_unguided_step(run: RunConfig, data: ExperimentData, out_dir: str) -> TrainResult:
    """Train the RGB segmenter; writes checkpoints/unguided.cseg and logs/loss_unguided.csv."""
    paths = output_layout(out_dir)
    plan = _plan(run, TASK_UNGUIDED, stage_seeds(run.seed)[TASK_UNGUIDED], paths["checkpoints"])
    result = train_unguided_seg(data.train, plan, FCNConfig.from_run_config(run, NUM_CLASSES))
    return _keep(result, TASK_UNGUIDED, out_dir)


def fit_noise_step(run: RunConfig, landmark_net: NetworkInstance, data: ExperimentData,
                   out_dir: str, workers: int = 1) -> NoiseModel:
    """Fit the detector's error model on the validation split only."""
    output_layout(out_dir)
    detections = detect_landmarks(landmark_net, [s.image for s in data.val], workers)
    noise = fit_noise_model(detections, [s.landmarks for s in data.val], run.full_covariance)
    save_noise_model(noise_model_path(out_dir), noise)
    return noise


def train_guided_step(run: RunConfig, data: ExperimentData, unguided: NetworkInstance,
                      noise: NoiseModel, out_dir: str) -> TrainResult:
    """Expand and fine-tune the segmenter; writes checkpoints/guided.cseg and logs/loss_guided.csv."""
    paths = output_layout(out_dir)
    plan = _plan(run, TASK_GUIDED, stage_seeds(run.seed)[TASK_GUIDED], paths["checkpoints"])
    return _keep(train_guided_seg(data.train, unguided, noise, plan), TASK_GUIDED, out_dir)


def check_splits(data: ExperimentData) -> None:
    if not data.train or not data.val or not data.test:
        raise CascadeSegException("train, val and test splits must all be non-empty")


def run_four_method_experiment(run: RunConfig, out_dir: str,
                               data: Optional[ExperimentData] = None,
                               data_dir: Optional[str] = None) -> ExperimentResult:
    """
    Train the detector and both segmenters, fit the noise model on validation
    detections and compare all four methods on the test split. Writes
    checkpoints/, logs/loss_*.csv, results/*.csv and run_manifest.txt.

    Raises:
        StageFailedError: Naming the stage that aborted
    """
    run.validate()
    paths = output_layout(out_dir)
    workers = worker_count(run)

    with stage("data"):
        data = data if data is not None else experiment_data(run, data_dir)
        check_splits(data)
        height, width = data.train[0].height, data.train[0].width
    write_run_manifest(os.path.join(out_dir, "run_manifest.txt"), run, stage_seeds(run.seed), data)
    histories: Dict[str, TrainResult] = {}

    with stage("train_landmarks"):
        histories[TASK_LANDMARKS] = train_landmarks_step(run, data, out_dir)
        landmark_net = histories[TASK_LANDMARKS].network

    with stage("evaluate_landmarks"):
        detections, errors = evaluate_landmark_net(landmark_net, data, paths["results"], workers)

    with stage("train_unguided"):
        histories[TASK_UNGUIDED] = train_unguided_step(run, data, out_dir)
        unguided_net = histories[TASK_UNGUIDED].network

    with stage("fit_noise"):
        noise = fit_noise_step(run, landmark_net, data, out_dir, workers)

    with stage("train_guided"):
        histories[TASK_GUIDED] = train_guided_step(run, data, unguided_net, noise, out_dir)
        guided_net = histories[TASK_GUIDED].network

    with stage("evaluate"):
        table, per_image = evaluate_segmenters(run, data, unguided_net, guided_net, detections,
                                               paths["results"], workers)

    logger.info(f"Experiment finished in {out_dir} ({width}x{height} inputs)")
    return ExperimentResult(table, errors, per_image, noise, histories)
