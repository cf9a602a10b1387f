"""
Training losses: sigmoid cross-entropy for heatmap regression and per-pixel
softmax cross-entropy for part segmentation.
"""

import numpy as np

from shared.types import SegMask
from shared.exceptions import ValidationException
from core.tensor import Tensor, GraphNode
from core.ops import stable_sigmoid


def sigmoid_ce_loss(logits: Tensor, targets, scale: float = 1.0) -> Tensor:
    """
    l = -scale/N * sum[t log s(z) + (1 - t) log(1 - s(z))] over an N x H x W stack,
    evaluated as max(z, 0) - z t + log(1 + exp(-|z|)).

    Args:
        logits: Raw scores, N x H x W
        targets: Array or Tensor of the same shape with values in [0, 1]
        scale: Loss multiplier (the gradient is scaled identically)

    Raises:
        ValidationException: On shape mismatch or targets outside [0, 1]
    """
    t = targets.values if isinstance(targets, Tensor) else np.asarray(targets)
    z = logits.values
    if t.shape != z.shape:
        raise ValidationException(f"Target shape {t.shape} != logits shape {z.shape}")
    if t.size and (t.min() < 0.0 or t.max() > 1.0):
        raise ValidationException("Sigmoid cross-entropy targets must lie in [0, 1]")
    t = t.astype(z.dtype, copy=False)
    factor = scale / z.shape[0]

    elementwise = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    loss = factor * elementwise.sum(dtype=np.float64)

    def backward(grad: np.ndarray):
        return ((grad * factor * (stable_sigmoid(z) - t)).astype(z.dtype),)

    return Tensor(np.array(loss), dtype=z.dtype, node=GraphNode("sigmoid_ce", (logits,), backward))


def _labels_array(labels) -> np.ndarray:
    if isinstance(labels, SegMask):
        return labels.labels
    return np.asarray(labels)


def softmax_ce_loss(logits: Tensor, labels) -> Tensor:
    """
    l = -1/(H W) * sum_ij log softmax(z_ij)[label_ij] over a C x H x W score map.

    Args:
        logits: Raw scores, C x H x W
        labels: SegMask or H x W integer array with values < C

    Raises:
        ValidationException: On size mismatch or an out-of-range label
    """
    z = logits.values
    classes, height, width = z.shape
    lab = _labels_array(labels).astype(np.int64)
    if lab.shape != (height, width):
        raise ValidationException(f"Labels {lab.shape} do not match scores {height}x{width}")
    if lab.size and (lab.min() < 0 or lab.max() >= classes):
        raise ValidationException(f"Labels must be in [0, {classes}), got max {lab.max()}")

    shifted = z - z.max(axis=0, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=0, keepdims=True))
    log_probs = shifted - log_norm
    picked = np.take_along_axis(log_probs, lab[None], axis=0)[0]
    count = height * width
    loss = -picked.sum(dtype=np.float64) / count

    def backward(grad: np.ndarray):
        probs = np.exp(log_probs)
        np.put_along_axis(probs, lab[None], np.take_along_axis(probs, lab[None], axis=0) - 1.0, axis=0)
        return ((grad * probs / count).astype(z.dtype),)

    return Tensor(np.array(loss), dtype=z.dtype, node=GraphNode("softmax_ce", (logits,), backward))


def pixel_accuracy(logits: Tensor, labels) -> float:
    """Fraction of pixels whose argmax class equals the label."""
    lab = _labels_array(labels)
    return float(np.mean(np.argmax(logits.values, axis=0) == lab))
