from network.config import (
    FCNConfig,
    LayerSpec,
    layer_plan,
    conv_layer_names,
    expected_parameter_count,
)
from network.fcn import (
    NetworkInstance,
    build_fcn,
    forward,
    expand_first_layer,
    enable_stage,
    set_trainable,
    all_layers,
    first_layer_only,
    layer_predicate,
    total_stride,
    first_layer_name,
    layer_of,
)
from network.checkpoint import (
    save_network,
    load_network,
    infer_config,
    parameter_snapshot,
    changed_parameters,
)
