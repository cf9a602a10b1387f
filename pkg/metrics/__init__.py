from metrics.iou import IoUReport, iou
from metrics.landmarks import (
    LandmarkErrorReport,
    landmark_error,
    landmark_error_report,
    interocular_distance,
    write_landmark_error_csv,
)
from metrics.comparison import (
    ComparisonTable,
    compare_methods,
    class_means,
    write_per_image_csv,
    METHODS,
    METHOD_UNGUIDED,
    METHOD_CONNECTED,
    METHOD_GUIDED_GT,
    METHOD_GUIDED_DETECTED,
    ALL_COLUMN,
)
