from core.tensor import (
    Tensor,
    Parameter,
    GraphNode,
    get_default_dtype,
    set_default_dtype,
    precision,
)
from core.ops import (
    conv2d,
    conv2d_transpose,
    bilinear_filter,
    maxpool2,
    relu,
    sigmoid,
    stable_sigmoid,
    crop_add,
    take_channels,
    conv_output_size,
)
from core.losses import sigmoid_ce_loss, softmax_ce_loss, pixel_accuracy
from core.optim import sgd_momentum_step, scale_grads
from core.checkpoint import save_checkpoint, load_checkpoint
