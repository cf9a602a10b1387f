"""
cascadeseg constants.
Full-scale values are kept next to the reduced (mini) defaults used at desk scale.
"""

# =============================================================================
# LANDMARK SCHEMA (Multi-PIE 68-point ordering, 1-based in comments)
# =============================================================================
NUM_LANDMARKS = 68
JAW = tuple(range(1, 18))
RIGHT_BROW = tuple(range(18, 23))
LEFT_BROW = tuple(range(23, 28))
NOSE_BRIDGE = tuple(range(28, 32))
NOSTRILS = tuple(range(32, 37))
RIGHT_EYE = tuple(range(37, 43))
LEFT_EYE = tuple(range(43, 49))
OUTER_LIPS = tuple(range(49, 61))
INNER_LIPS = tuple(range(61, 69))

# Outer eye corners used for interocular normalisation
OUTER_EYE_CORNERS = (37, 46)

# =============================================================================
# SEGMENTATION CLASSES
# =============================================================================
NUM_CLASSES = 8
CLASS_NAMES = (
    "background",
    "skin",
    "eyebrows",
    "eyes",
    "nose",
    "upper_lip",
    "inner_mouth",
    "lower_lip",
)

# =============================================================================
# PREPROCESSING
# =============================================================================
TARGET_FACE_HEIGHT = 350
EYEBROW_WIDTH_FRAC = 0.04  # 14 px at 350
OCCLUSION_PROB = 0.5
OCCLUSION_MIN_FRAC = 0.15
OCCLUSION_MAX_FRAC = 0.4
DEFAULT_JITTER = 0.05
SPLINE_SEGMENTS_PER_SPAN = 8

# =============================================================================
# HEATMAPS
# =============================================================================
HEATMAP_SIGMA = 5.0  # pixels at TARGET_FACE_HEIGHT
HEATMAP_MAGIC = b"HMST"

# =============================================================================
# CHECKPOINTS
# =============================================================================
CHECKPOINT_MAGIC = b"CSEG"
CHECKPOINT_VERSION = 1

# =============================================================================
# NETWORK
# =============================================================================
STAGE_STRIDE32 = "stride32"
STAGE_STRIDE16 = "stride16"
STAGE_STRIDE8 = "stride8"
STAGE_ORDER = (STAGE_STRIDE32, STAGE_STRIDE16, STAGE_STRIDE8)

FULL_BLOCKS = ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512))
FULL_HEAD_KERNELS = (7, 1)
FULL_HEAD_WIDTH = 4096
FULL_TRAIN_SIZE = 352

MINI_BLOCKS = ((2, 16), (2, 32), (3, 64))
MINI_HEAD_KERNELS = (3, 1)
MINI_HEAD_WIDTH = 128
MINI_TRAIN_SIZE = 64

IMAGE_CHANNELS = 3
GUIDED_INPUT_CHANNELS = IMAGE_CHANNELS + NUM_LANDMARKS

# =============================================================================
# TRAINING
# =============================================================================
FULL_LEARNING_RATE = 0.0001
FULL_MOMENTUM = 0.9
FULL_SIGMOID_LOSS_SCALE = 1e-5
FULL_LANDMARK_ITERATIONS = 400_000
FULL_SEGMENTATION_ITERATIONS = 300_000
FULL_WARMUP_ITERATIONS = 10_000

MINI_LEARNING_RATE = 0.01
MINI_LANDMARK_ITERATIONS = 500
MINI_SEGMENTATION_ITERATIONS = 2000
MINI_GUIDED_ITERATIONS = 1500
MINI_WARMUP_ITERATIONS = 500
STAGE_BUDGET_SPLIT = (0.4, 0.3, 0.3)

DIVERGENCE_LOSS = 1e6
LOSS_SMOOTHING = 0.01
LOG_EVERY = 100

# =============================================================================
# NOISE MODEL / SPLITS
# =============================================================================
VALIDATION_FRACTION = 0.1
TEST_FRACTION = 0.2
FULL_COVARIANCE_MIN_SAMPLES = 10 * 2 * NUM_LANDMARKS

# Reference detector error from the 300-W test set (normalised by interocular distance)
REFERENCE_LANDMARK_ERROR = 0.0479

# =============================================================================
# SYNTHETIC DATA
# =============================================================================
SYNTH_TRAIN_COUNT = 200
SYNTH_TEST_COUNT = 50
SYNTH_AMPLITUDE = 0.05
SYNTH_TEXTURE_NOISE = 0.12

# =============================================================================
# ENVIRONMENT
# =============================================================================
THREADS_ENV = "CASCADESEG_THREADS"
ACCEPTANCE_ENV = "CASCADESEG_ACCEPTANCE"
