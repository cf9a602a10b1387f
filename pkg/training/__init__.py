from training.plan import (
    TrainPlan,
    TrainStage,
    stage_budgets,
    staged_stages,
    guided_stages,
    TASK_LANDMARKS,
    TASK_UNGUIDED,
    TASK_GUIDED,
    TASKS,
)
from training.history import LossRecord, TrainResult, smoothed, write_loss_csv, read_loss_csv
from training.stream import SampleStream
from training.trainer import (
    TrainItem,
    train_landmark_net,
    train_unguided_seg,
    train_guided_seg,
    run_plan,
    landmark_items,
    unguided_items,
    guided_items,
    landmark_loss,
    segmentation_loss,
    evaluate_loss,
    init_rng,
    heatmap_sigma,
    landmark_loss_scale,
    segmentation_labels,
)
