from pipeline.synth import SynthSpec, synth_faces, face_template, render_sample, export_dataset, sample_stem
from pipeline.dataset import (
    DatasetEntry,
    DatasetManifest,
    load_dataset,
    load_entry,
    split_indices,
    SPLIT_TRAIN,
    SPLIT_VAL,
    SPLIT_TEST,
    SPLITS,
)
from pipeline.experiment import (
    ExperimentData,
    ExperimentResult,
    run_four_method_experiment,
    experiment_data,
    synth_experiment_data,
    directory_experiment_data,
    detect_landmarks,
    predict_mask,
    evaluate_four_methods,
    evaluate_landmark_net,
    evaluate_segmenters,
    score_predictions,
    class_names_for,
    train_landmarks_step,
    train_unguided_step,
    fit_noise_step,
    train_guided_step,
    check_splits,
    checkpoint_path,
    noise_model_path,
    output_layout,
    write_run_manifest,
    worker_count,
    ordered_map,
    stage_seeds,
    stage,
)
