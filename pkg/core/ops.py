"""
Differentiable operators for the FCN: convolution, transposed convolution,
2x2 max pooling, activations and the skip-fusion crop-add.

All spatial tensors are channel-first (C, H, W) without a batch dimension.
"""

from typing import Optional
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from shared.exceptions import ConfigurationException, ValidationException
from core.tensor import Tensor, GraphNode


def _windows(padded: np.ndarray, k: int, stride: int) -> np.ndarray:
    # (C, H', W', k, k) view of every receptive field
    return sliding_window_view(padded, (k, k), axis=(1, 2))[:, ::stride, ::stride]


def _scatter_windows(target: np.ndarray, patches: np.ndarray, stride: int) -> None:
    # target[:, i + s*h, j + s*w] += patches[:, i, j, h, w], summed in fixed (i, j) order
    _, k, _, out_h, out_w = patches.shape
    for i in range(k):
        for j in range(k):
            target[:, i:i + stride * (out_h - 1) + 1:stride,
                   j:j + stride * (out_w - 1) + 1:stride] += patches[:, i, j]


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    """
    Output length of a strided convolution.

    Raises:
        ConfigurationException: If the size is not an exact integer >= 1
    """
    span = size + 2 * pad - k
    if span < 0 or span % stride != 0:
        raise ConfigurationException(
            f"Convolution of size {size} with k={k}, stride={stride}, pad={pad} is not integral"
        )
    return span // stride + 1


def conv2d(x: Tensor, weights: Tensor, bias: Optional[Tensor], stride: int = 1, pad: int = 0) -> Tensor:
    """
    Cross-correlation of a (C_in, H, W) input with (C_out, C_in, k, k) weights.

    Raises:
        ConfigurationException: On inconsistent shapes or non-integral output size
    """
    c_in, height, width = x.shape
    c_out, w_cin, k, k2 = weights.shape
    if w_cin != c_in or k != k2:
        raise ConfigurationException(f"Weights {weights.shape} do not fit input {x.shape}")
    if bias is not None and bias.shape != (c_out,):
        raise ConfigurationException(f"Bias {bias.shape} does not match {c_out} outputs")
    out_h = conv_output_size(height, k, stride, pad)
    out_w = conv_output_size(width, k, stride, pad)

    padded = np.pad(x.values, ((0, 0), (pad, pad), (pad, pad)))
    windows = _windows(padded, k, stride)
    out = np.tensordot(weights.values, windows, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out += bias.values[:, None, None]

    def backward(grad: np.ndarray):
        grad_w = np.tensordot(grad, windows, axes=([1, 2], [1, 2]))
        grad_b = grad.sum(axis=(1, 2)) if bias is not None else None
        grad_x = None
        if x.requires_grad:
            patches = np.tensordot(weights.values, grad, axes=([0], [0]))
            grad_padded = np.zeros_like(padded)
            _scatter_windows(grad_padded, patches, stride)
            grad_x = grad_padded[:, pad:pad + height, pad:pad + width]
        return grad_x, grad_w, grad_b

    parents = (x, weights, bias) if bias is not None else (x, weights)
    return Tensor(out, dtype=x.dtype, node=GraphNode("conv2d", parents, backward))


def conv2d_transpose(x: Tensor, weights: Tensor, stride: int, crop: int = 0) -> Tensor:
    """
    Adjoint of `conv2d(., weights, stride, pad=crop)`: upsamples (C_in, H, W) to
    (C_out, stride*(H-1) + k - 2*crop, ...). Weights are (C_in, C_out, k, k).

    Raises:
        ConfigurationException: On inconsistent shapes or a negative output size
    """
    c_in, height, width = x.shape
    w_cin, c_out, k, k2 = weights.shape
    if w_cin != c_in or k != k2:
        raise ConfigurationException(f"Weights {weights.shape} do not fit input {x.shape}")
    full_h = stride * (height - 1) + k
    full_w = stride * (width - 1) + k
    out_h, out_w = full_h - 2 * crop, full_w - 2 * crop
    if out_h <= 0 or out_w <= 0 or crop < 0:
        raise ConfigurationException(
            f"Transposed convolution output {out_h}x{out_w} is not positive (crop={crop})"
        )

    patches = np.tensordot(weights.values, x.values, axes=([0], [0]))
    full = np.zeros((c_out, full_h, full_w), dtype=x.dtype)
    _scatter_windows(full, patches, stride)
    out = full[:, crop:crop + out_h, crop:crop + out_w]

    def backward(grad: np.ndarray):
        grad_full = np.zeros_like(full)
        grad_full[:, crop:crop + out_h, crop:crop + out_w] = grad
        windows = _windows(grad_full, k, stride)
        grad_w = np.tensordot(x.values, windows, axes=([1, 2], [1, 2]))
        grad_x = None
        if x.requires_grad:
            grad_x = np.tensordot(weights.values, windows, axes=([1, 2, 3], [0, 3, 4]))
        return grad_x, grad_w

    return Tensor(out, dtype=x.dtype, node=GraphNode("conv2d_transpose", (x, weights), backward))


def bilinear_filter(k: int, channels: int) -> Tensor:
    """
    FCN bilinear upsampling kernel as (channels, channels, k, k) weights that map
    each channel to itself.

    Raises:
        ValidationException: If k < 1
    """
    if k < 1:
        raise ValidationException(f"Kernel size must be >= 1, got {k}")
    factor = (k + 1) // 2
    center = factor - 1 if k % 2 == 1 else factor - 0.5
    profile = 1.0 - np.abs(np.arange(k) - center) / factor
    kernel = np.outer(profile, profile)
    weights = np.zeros((channels, channels, k, k))
    weights[np.arange(channels), np.arange(channels)] = kernel
    return Tensor(weights)


def maxpool2(x: Tensor) -> Tensor:
    """
    2x2 / stride-2 max pooling. Odd sizes are padded with -inf; the gradient goes to
    the first maximum of each window in row-major order.
    """
    channels, height, width = x.shape
    pad_h, pad_w = height % 2, width % 2
    padded = np.pad(x.values, ((0, 0), (0, pad_h), (0, pad_w)), constant_values=-np.inf)
    out_h, out_w = padded.shape[1] // 2, padded.shape[2] // 2
    blocks = padded.reshape(channels, out_h, 2, out_w, 2).transpose(0, 1, 3, 2, 4)
    blocks = blocks.reshape(channels, out_h, out_w, 4)
    winner = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]

    def backward(grad: np.ndarray):
        routed = np.zeros((channels, out_h, out_w, 4), dtype=grad.dtype)
        np.put_along_axis(routed, winner[..., None], grad[..., None], axis=-1)
        routed = routed.reshape(channels, out_h, out_w, 2, 2).transpose(0, 1, 3, 2, 4)
        routed = routed.reshape(channels, 2 * out_h, 2 * out_w)
        return (routed[:, :height, :width],)

    return Tensor(out, dtype=x.dtype, node=GraphNode("maxpool2", (x,), backward))


def relu(x: Tensor) -> Tensor:
    """Elementwise max(x, 0)."""
    positive = x.values > 0
    out = np.where(positive, x.values, 0).astype(x.dtype)

    def backward(grad: np.ndarray):
        return (grad * positive,)

    return Tensor(out, dtype=x.dtype, node=GraphNode("relu", (x,), backward))


def stable_sigmoid(values: np.ndarray) -> np.ndarray:
    """Logistic function without overflow for large |x|."""
    e = np.exp(-np.abs(values))
    return np.where(values >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(values.dtype)


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic function."""
    out = stable_sigmoid(x.values)

    def backward(grad: np.ndarray):
        return (grad * out * (1.0 - out),)

    return Tensor(out, dtype=x.dtype, node=GraphNode("sigmoid", (x,), backward))


def crop_add(coarse: Tensor, skip: Tensor) -> Tensor:
    """
    Center-crop `skip` to the spatial size of `coarse` and add.

    Raises:
        ConfigurationException: If channels differ or `skip` is smaller than `coarse`
    """
    channels, height, width = coarse.shape
    s_channels, s_height, s_width = skip.shape
    if channels != s_channels:
        raise ConfigurationException(f"crop_add channel mismatch: {channels} vs {s_channels}")
    if s_height < height or s_width < width:
        raise ConfigurationException(
            f"Skip {s_height}x{s_width} is smaller than coarse {height}x{width}"
        )
    top = (s_height - height) // 2
    left = (s_width - width) // 2
    out = coarse.values + skip.values[:, top:top + height, left:left + width]

    def backward(grad: np.ndarray):
        grad_skip = np.zeros(skip.shape, dtype=grad.dtype)
        grad_skip[:, top:top + height, left:left + width] = grad
        return grad, grad_skip

    return Tensor(out, dtype=coarse.dtype, node=GraphNode("crop_add", (coarse, skip), backward))


def take_channels(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    """Slice [start, stop) along one axis; the gradient is scattered back into zeros."""
    index = [slice(None)] * x.values.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = x.values[index]
    if not x.requires_grad:
        return Tensor(out, dtype=x.dtype)

    def backward(grad: np.ndarray):
        full = np.zeros(x.shape, dtype=grad.dtype)
        full[index] = grad
        return (full,)

    return Tensor(out, dtype=x.dtype, node=GraphNode("take_channels", (x,), backward))
