#!/usr/bin/env python3
"""
cascadeseg - landmark-guided face segmentation.

SUBCOMMANDS:
- synth            Write a synthetic dataset (NNNNN.png / .pts / _mask.png)
- train-landmarks  Train the 68-point heatmap detector
- train-unguided   Train the RGB-only segmenter
- fit-noise        Fit the detector error model on the validation split
- train-guided     Expand the segmenter with heatmap inputs and fine-tune it
- eval             Score all four methods on the test split
- experiment       Run every step above in order

Every command reads --config (key=value text), --seed, --out and
--deterministic. Without --data the seeded synthetic benchmark is used.
CASCADESEG_THREADS caps numpy/BLAS and evaluation threads.
"""

import sys
import os

# Add current directory to path for module imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

# BLAS reads its thread count once, so this has to happen before numpy loads
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
_threads = "1" if "--deterministic" in sys.argv else os.environ.get("CASCADESEG_THREADS", "")
if _threads.isdigit() and int(_threads) > 0:
    for _var in _THREAD_VARS:
        os.environ[_var] = _threads

import argparse
import traceback
from typing import List, Optional

from shared import CascadeSegException, RunConfig, load_config, configure_logging, get_logger
from network import load_network
from noise import load_noise_model
from pipeline import (
    SynthSpec,
    synth_faces,
    export_dataset,
    experiment_data,
    check_splits,
    checkpoint_path,
    noise_model_path,
    output_layout,
    worker_count,
    train_landmarks_step,
    train_unguided_step,
    fit_noise_step,
    train_guided_step,
    evaluate_landmark_net,
    evaluate_segmenters,
    run_four_method_experiment,
)

logger = get_logger("MAIN")

DEFAULT_OUT = "runs/latest"


def build_parser() -> argparse.ArgumentParser:
    """Subcommand parser; shared flags live on a parent parser."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value run configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default=DEFAULT_OUT, help="output directory")
    common.add_argument("--deterministic", action="store_true",
                        help="single-threaded, bit-reproducible run")
    common.add_argument("--data", help="directory of image + pts pairs (synthetic when omitted)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cascadeseg", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    synth.add_argument("--count", type=int, help="number of samples (default: train_count)")

    sub.add_parser("train-landmarks", parents=[common], help="train the landmark detector")
    sub.add_parser("train-unguided", parents=[common], help="train the unguided segmenter")

    fit = sub.add_parser("fit-noise", parents=[common], help="fit the detector noise model")
    fit.add_argument("--landmarks", help="landmark checkpoint (default: <out>/checkpoints/landmarks.cseg)")

    guided = sub.add_parser("train-guided", parents=[common], help="train the guided segmenter")
    guided.add_argument("--unguided", help="unguided checkpoint (default: <out>/checkpoints/unguided.cseg)")
    guided.add_argument("--noise", help="noise model (default: <out>/checkpoints/noise_model.txt)")

    evaluate = sub.add_parser("eval", parents=[common], help="compare the four methods")
    evaluate.add_argument("--landmarks", help="landmark checkpoint")
    evaluate.add_argument("--unguided", help="unguided checkpoint")
    evaluate.add_argument("--guided", help="guided checkpoint")

    sub.add_parser("experiment", parents=[common], help="run the full four-method experiment")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file values with CLI overrides applied, validated."""
    run = load_config(args.config)
    run = run.with_overrides(seed=args.seed, deterministic=True if args.deterministic else None)
    run.validate()
    return run


def _cmd_synth(run: RunConfig, args: argparse.Namespace) -> None:
    count = args.count or run.train_count
    spec = SynthSpec(count, size=run.image_size, amplitude=run.synth_amplitude,
                     texture_noise=run.synth_texture_noise, seed=run.seed,
                     stride=2 ** len(run.block_spec), eyebrow_width_frac=run.eyebrow_width_frac)
    export_dataset(synth_faces(spec), args.out)


def _cmd_train_landmarks(run: RunConfig, args: argparse.Namespace) -> None:
    data = experiment_data(run, args.data)
    train_landmarks_step(run, data, args.out)


def _cmd_train_unguided(run: RunConfig, args: argparse.Namespace) -> None:
    data = experiment_data(run, args.data)
    train_unguided_step(run, data, args.out)


def _cmd_fit_noise(run: RunConfig, args: argparse.Namespace) -> None:
    data = experiment_data(run, args.data)
    landmark_net = load_network(args.landmarks or checkpoint_path(args.out, "landmarks"))
    noise = fit_noise_step(run, landmark_net, data, args.out, worker_count(run))
    logger.info(f"Noise model fitted at reference face height {noise.face_size_ref:.1f}")


def _cmd_train_guided(run: RunConfig, args: argparse.Namespace) -> None:
    data = experiment_data(run, args.data)
    unguided = load_network(args.unguided or checkpoint_path(args.out, "unguided"))
    noise = load_noise_model(args.noise or noise_model_path(args.out))
    train_guided_step(run, data, unguided, noise, args.out)


def _cmd_eval(run: RunConfig, args: argparse.Namespace) -> None:
    data = experiment_data(run, args.data)
    check_splits(data)
    landmark_net = load_network(args.landmarks or checkpoint_path(args.out, "landmarks"))
    unguided = load_network(args.unguided or checkpoint_path(args.out, "unguided"))
    guided = load_network(args.guided or checkpoint_path(args.out, "guided"))
    results = output_layout(args.out)["results"]
    workers = worker_count(run)
    detections, _ = evaluate_landmark_net(landmark_net, data, results, workers)
    evaluate_segmenters(run, data, unguided, guided, detections, results, workers)


def _cmd_experiment(run: RunConfig, args: argparse.Namespace) -> None:
    run_four_method_experiment(run, args.out, data_dir=args.data)


COMMANDS = {
    "synth": _cmd_synth,
    "train-landmarks": _cmd_train_landmarks,
    "train-unguided": _cmd_train_unguided,
    "fit-noise": _cmd_fit_noise,
    "train-guided": _cmd_train_guided,
    "eval": _cmd_eval,
    "experiment": _cmd_experiment,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments and run one subcommand. Returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        run = resolve_config(args)
        COMMANDS[args.command](run, args)
    except CascadeSegException as e:
        logger.error(str(e))
        return 2
    except Exception as e:
        print(f"cascadeseg crashed with error: {e}")
        traceback.print_exc()
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
