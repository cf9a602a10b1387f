"""
Network checkpoints: parameters are stored under their layer names, and the
architecture is recovered from those names and tensor shapes on load.
"""

import re
from dataclasses import replace
from typing import Dict, List, Optional, Tuple
import numpy as np

from shared.constants import STAGE_STRIDE32, STAGE_STRIDE16, STAGE_STRIDE8
from shared.exceptions import ResourceLoadError, CascadeSegException
from shared.log import get_logger
from core.tensor import Tensor, Parameter
from core.checkpoint import save_checkpoint, load_checkpoint
from network.config import FCNConfig
from network.fcn import NetworkInstance

logger = get_logger("CHECKPOINT")

_CONV_NAME = re.compile(r"^conv(\d+)_(\d+)\.weight$")


def save_network(net: NetworkInstance, path: str) -> None:
    """Write every parameter of `net` in forward order."""
    save_checkpoint(path, net.parameters())
    logger.info(f"Saved {len(net.parameters())} tensors to {path}")


def _infer_blocks(tensors: Dict[str, np.ndarray]) -> Tuple[Tuple[int, int], ...]:
    counts: Dict[int, int] = {}
    widths: Dict[int, int] = {}
    for name, values in tensors.items():
        match = _CONV_NAME.match(name)
        if match:
            block, index = int(match.group(1)), int(match.group(2))
            counts[block] = max(counts.get(block, 0), index)
            if index == 1:
                widths[block] = values.shape[0]
    if not counts or sorted(counts) != list(range(1, len(counts) + 1)):
        raise ResourceLoadError(f"Checkpoint conv blocks are incomplete: {sorted(counts)}")
    return tuple((counts[b], widths[b]) for b in sorted(counts))


def infer_config(tensors: Dict[str, np.ndarray], base: Optional[FCNConfig] = None) -> FCNConfig:
    """
    Architecture implied by checkpoint tensor names and shapes. Fields that the
    tensors do not determine (the training size) come from `base`.

    Raises:
        ResourceLoadError: If required layers are missing
    """
    required = ["conv1_1.weight", "fc6_conv.weight", "fc7_conv.weight", "fc8_conv.weight"]
    missing = [name for name in required if name not in tensors]
    if missing:
        raise ResourceLoadError(f"Checkpoint lacks {missing}")

    stages = {STAGE_STRIDE32}
    if "score_pool4.weight" in tensors:
        stages.add(STAGE_STRIDE16)
    if "score_pool3.weight" in tensors:
        stages.add(STAGE_STRIDE8)

    fc6 = tensors["fc6_conv.weight"]
    fc7 = tensors["fc7_conv.weight"]
    inferred = FCNConfig(
        blocks=_infer_blocks(tensors),
        head_kernels=(fc6.shape[2], fc7.shape[2]),
        head_width=fc6.shape[0],
        output_channels=tensors["fc8_conv.weight"].shape[0],
        skip_stages=frozenset(stages),
        input_channels=tensors["conv1_1.weight"].shape[1],
    )
    if base is not None:
        inferred = replace(inferred, train_size=base.train_size)
    return inferred


def load_network(path: str, base: Optional[FCNConfig] = None) -> NetworkInstance:
    """
    Rebuild a network from a checkpoint.

    Raises:
        ResourceLoadError: If the file is corrupt or does not describe a valid network
    """
    tensors = load_checkpoint(path)
    try:
        config = infer_config(tensors, base)
        params = {name: Parameter(name, Tensor(values, dtype=values.dtype))
                  for name, values in tensors.items()}
        net = NetworkInstance(config, params)
    except ResourceLoadError:
        raise
    except CascadeSegException as e:
        raise ResourceLoadError(f"{path}: {e}") from e

    for spec in net.plan:
        expected = ((spec.in_channels, spec.out_channels) if spec.kind == "deconv"
                    else (spec.out_channels, spec.in_channels)) + (spec.kernel, spec.kernel)
        actual = net.weight(spec.name).shape
        if actual != expected:
            raise ResourceLoadError(f"{path}: {spec.name} has shape {actual}, expected {expected}")
    logger.info(f"Loaded {net!r} from {path}")
    return net


def parameter_snapshot(net: NetworkInstance) -> Dict[str, np.ndarray]:
    """Copies of every parameter array, keyed by name."""
    return {param.name: param.values.copy() for param in net.parameters()}


def changed_parameters(before: Dict[str, np.ndarray], net: NetworkInstance) -> List[str]:
    """Names whose values differ from a snapshot."""
    return [p.name for p in net.parameters() if not np.array_equal(before[p.name], p.values)]
