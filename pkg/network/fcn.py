"""
VGG-style fully convolutional network with FCN-32s/16s/8s skip fusion.

The forward pass runs conv blocks (3x3 convs + ReLU, then 2x2 max pooling), the
fc6/fc7/fc8 head, and a chain of bilinear-initialised transposed convolutions back
to the input resolution. Each enabled skip stage adds a zero-initialised 1x1 score
of an earlier pooling output before the next upsampling.
"""

import fnmatch
from dataclasses import replace
from typing import Callable, Dict, List, Optional
import numpy as np

from shared.constants import IMAGE_CHANNELS, STAGE_STRIDE16, STAGE_STRIDE8, STAGE_ORDER
from shared.exceptions import ConfigurationException, InvalidStateError, ValidationException
from shared.log import get_logger
from core.tensor import Tensor, Parameter
from core.ops import (
    conv2d,
    conv2d_transpose,
    bilinear_filter,
    maxpool2,
    relu,
    crop_add,
    take_channels,
)
from network.config import FCNConfig, LayerSpec, layer_plan

logger = get_logger("FCN")

LayerPredicate = Callable[[str], bool]

_STAGE_SCORE_LAYER = {STAGE_STRIDE16: "score_pool4", STAGE_STRIDE8: "score_pool3"}


def _weight_name(layer: str) -> str:
    return f"{layer}.weight"


def _bias_name(layer: str) -> str:
    return f"{layer}.bias"


def layer_of(param_name: str) -> str:
    """Layer part of "conv1_1.weight"."""
    return param_name.rsplit(".", 1)[0]


class NetworkInstance:
    """A configured FCN with its ordered, named parameters."""

    def __init__(self, config: FCNConfig, params: Dict[str, Parameter]):
        self.config = config
        self.plan: List[LayerSpec] = layer_plan(config)
        self._params: Dict[str, Parameter] = {}
        for spec in self.plan:
            for name in self._names_for(spec):
                if name not in params:
                    raise ValidationException(f"Missing parameter '{name}'")
                self._params[name] = params[name]
        extra = set(params) - set(self._params)
        if extra:
            raise ValidationException(f"Unexpected parameters: {sorted(extra)}")

    @staticmethod
    def _names_for(spec: LayerSpec) -> List[str]:
        if spec.kind == "deconv":
            return [_weight_name(spec.name)]
        return [_weight_name(spec.name), _bias_name(spec.name)]

    def parameters(self) -> List[Parameter]:
        """All parameters in forward order."""
        return list(self._params.values())

    def param(self, name: str) -> Parameter:
        try:
            return self._params[name]
        except KeyError:
            raise ValidationException(f"No parameter named '{name}'") from None

    def has_layer(self, layer: str) -> bool:
        return _weight_name(layer) in self._params

    def weight(self, layer: str) -> Tensor:
        return self.param(_weight_name(layer)).tensor

    def bias(self, layer: str) -> Optional[Tensor]:
        param = self._params.get(_bias_name(layer))
        return param.tensor if param is not None else None

    def layer_names(self) -> List[str]:
        return [spec.name for spec in self.plan]

    def parameter_count(self) -> int:
        return sum(param.size for param in self._params.values())

    def trainable_layers(self) -> List[str]:
        return sorted({layer_of(p.name) for p in self._params.values() if p.trainable},
                      key=self.layer_names().index)

    def __repr__(self) -> str:
        return (f"NetworkInstance(blocks={self.config.blocks}, "
                f"stages={sorted(self.config.skip_stages)}, params={self.parameter_count()})")


def _init_layer(spec: LayerSpec, rng: np.random.Generator, dtype) -> Dict[str, Parameter]:
    weight_name, bias_name = _weight_name(spec.name), _bias_name(spec.name)
    if spec.kind == "deconv":
        weights = bilinear_filter(spec.kernel, spec.out_channels).values.astype(dtype)
        return {weight_name: Parameter(weight_name, Tensor(weights, dtype=dtype))}

    shape = (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)
    if spec.kind == "score":
        weights = np.zeros(shape, dtype=dtype)
    else:
        limit = np.sqrt(6.0 / (spec.in_channels * spec.kernel ** 2))
        weights = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return {
        weight_name: Parameter(weight_name, Tensor(weights, dtype=dtype)),
        bias_name: Parameter(bias_name, Tensor(np.zeros(spec.out_channels), dtype=dtype)),
    }


def build_fcn(config: FCNConfig, rng: np.random.Generator, dtype=np.float32) -> NetworkInstance:
    """
    Create a freshly initialised network.

    Convolutions use He-uniform weights and zero biases, score layers start at zero
    and every transposed convolution is a fixed bilinear upsampler.

    Raises:
        ConfigurationException: If the config is invalid
    """
    params: Dict[str, Parameter] = {}
    for spec in layer_plan(config):
        params.update(_init_layer(spec, rng, dtype))
    net = NetworkInstance(config, params)
    logger.debug(f"Built {net!r}")
    return net


def _apply(net: NetworkInstance, spec: LayerSpec, x: Tensor) -> Tensor:
    if spec.kind == "deconv":
        return conv2d_transpose(x, net.weight(spec.name), spec.stride, spec.pad)
    return conv2d(x, net.weight(spec.name), net.bias(spec.name), spec.stride, spec.pad)


def _first_conv(net: NetworkInstance, spec: LayerSpec, x: Tensor) -> Tensor:
    if spec.in_channels <= IMAGE_CHANNELS:
        return _apply(net, spec, x)
    # image and guidance channels are convolved separately so that zero guidance
    # leaves the image response bit-identical to the unexpanded layer
    weight = net.weight(spec.name)
    image = conv2d(take_channels(x, 0, IMAGE_CHANNELS),
                   take_channels(weight, 0, IMAGE_CHANNELS, axis=1),
                   net.bias(spec.name), spec.stride, spec.pad)
    guidance = conv2d(take_channels(x, IMAGE_CHANNELS, spec.in_channels),
                      take_channels(weight, IMAGE_CHANNELS, spec.in_channels, axis=1),
                      None, spec.stride, spec.pad)
    return crop_add(image, guidance)


def forward(net: NetworkInstance, x: Tensor) -> Tensor:
    """
    Score map of shape (output_channels, H, W) for a (input_channels, H, W) input.

    Raises:
        ValidationException: On a channel mismatch or H/W not divisible by the total stride
    """
    config = net.config
    channels, height, width = x.shape
    if channels != config.input_channels:
        raise ValidationException(
            f"Input has {channels} channels, network expects {config.input_channels}"
        )
    stride = config.total_stride
    if height % stride or width % stride:
        raise ValidationException(f"Input {height}x{width} is not divisible by total stride {stride}")

    specs = {spec.name: spec for spec in net.plan}
    pools: List[Tensor] = []
    h = relu(_first_conv(net, net.plan[0], x))
    for b, (count, _) in enumerate(config.blocks):
        for i in range(1 if b == 0 else 0, count):
            h = relu(_apply(net, specs[f"conv{b + 1}_{i + 1}"], h))
        h = maxpool2(h)
        pools.append(h)

    h = relu(_apply(net, specs["fc6_conv"], h))
    h = relu(_apply(net, specs["fc7_conv"], h))
    h = _apply(net, specs["fc8_conv"], h)

    h = _apply(net, specs["deconv_32"], h)
    if "score_pool4" in specs:
        h = crop_add(h, _apply(net, specs["score_pool4"], pools[-2]))
    h = _apply(net, specs["deconv_16"], h)
    if "score_pool3" in specs:
        h = crop_add(h, _apply(net, specs["score_pool3"], pools[-3]))
    return _apply(net, specs["deconv_8"], h)


def total_stride(net: NetworkInstance) -> int:
    return net.config.total_stride


def first_layer_name(net: NetworkInstance) -> str:
    return net.plan[0].name


def expand_first_layer(net: NetworkInstance, extra_channels: int,
                       rng: Optional[np.random.Generator] = None) -> NetworkInstance:
    """
    Copy of a 3-channel network whose first conv accepts `extra_channels` more inputs.
    The added weight columns are zero, so the copy computes the same function on
    inputs whose extra channels are zero. Momentum buffers are reset; `rng` is not
    consumed by zero initialisation.

    Raises:
        InvalidStateError: If the network does not take exactly 3 input channels
    """
    if net.config.input_channels != 3:
        raise InvalidStateError(
            f"Only 3-channel networks can be expanded, got {net.config.input_channels}"
        )
    if extra_channels < 1:
        raise ValidationException(f"extra_channels must be >= 1, got {extra_channels}")

    config = replace(net.config, input_channels=3 + extra_channels)
    first = first_layer_name(net)
    params: Dict[str, Parameter] = {}
    for param in net.parameters():
        values = param.values.copy()
        if param.name == _weight_name(first):
            out_c, _, k, _ = values.shape
            zeros = np.zeros((out_c, extra_channels, k, k), dtype=values.dtype)
            values = np.concatenate([values, zeros], axis=1)
        params[param.name] = Parameter(param.name, Tensor(values, dtype=values.dtype),
                                       trainable=param.trainable)
    logger.info(f"Expanded {first} by {extra_channels} zero-initialised input channels")
    return NetworkInstance(config, params)


def enable_stage(net: NetworkInstance, stage: str) -> NetworkInstance:
    """
    Network with one more prediction stage. The new score layer is zero-initialised,
    so the output is unchanged until it trains. Existing parameters are shared.

    Raises:
        ConfigurationException: If the stage is unknown or cannot be enabled yet
    """
    if stage not in STAGE_ORDER:
        raise ConfigurationException(f"Unknown stage '{stage}'")
    if stage in net.config.skip_stages:
        return net
    config = net.config.with_stages(net.config.skip_stages | {stage})
    params = {param.name: param for param in net.parameters()}
    dtype = net.parameters()[0].values.dtype
    for spec in layer_plan(config):
        if spec.name == _STAGE_SCORE_LAYER[stage]:
            params.update(_init_layer(spec, np.random.default_rng(0), dtype))
    logger.info(f"Enabled {stage} stage")
    return NetworkInstance(config, params)


def all_layers(_: str) -> bool:
    return True


def first_layer_only(layer: str) -> bool:
    return layer == "conv1_1"


def layer_predicate(pattern: str) -> LayerPredicate:
    """
    Predicate from a text spec: "all", "first", or comma-separated glob patterns
    such as "conv1_*,fc8_conv".
    """
    text = pattern.strip()
    if text == "all":
        return all_layers
    if text == "first":
        return first_layer_only
    patterns = [p.strip() for p in text.split(",") if p.strip()]
    if not patterns:
        raise ConfigurationException(f"Empty layer pattern: '{pattern}'")
    return lambda layer: any(fnmatch.fnmatchcase(layer, p) for p in patterns)


def set_trainable(net: NetworkInstance, predicate: LayerPredicate) -> List[str]:
    """
    Mark parameters trainable iff their layer matches; everything else is frozen.

    Returns:
        Names of the matching layers
    """
    matched = [layer for layer in net.layer_names() if predicate(layer)]
    for param in net.parameters():
        param.trainable = layer_of(param.name) in matched
    if not matched:
        logger.warning("Trainable-layer predicate matched no layers; every parameter is frozen")
    return matched
