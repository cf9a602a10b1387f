"""
Unit tests for the autodiff core: finite-difference gradient checks, naive
loop references, the transposed-convolution adjoint, SGD and checkpoints.
"""
import os
import tempfile
import unittest
import numpy as np

from shared.exceptions import ConfigurationException, InvalidStateError, ResourceLoadError, ValidationException
from core import (
    Tensor,
    Parameter,
    precision,
    get_default_dtype,
    conv2d,
    conv2d_transpose,
    bilinear_filter,
    maxpool2,
    relu,
    sigmoid,
    crop_add,
    take_channels,
    sigmoid_ce_loss,
    softmax_ce_loss,
    pixel_accuracy,
    sgd_momentum_step,
    scale_grads,
    save_checkpoint,
    load_checkpoint,
)

H = 1e-4
TOLERANCE = 1e-5


def leaf(values) -> Tensor:
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True, dtype=np.float64)


def numeric_grad(fn, array: np.ndarray) -> np.ndarray:
    """Central differences of the scalar fn() with respect to `array`, in place."""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + H
        plus = fn()
        array[index] = original - H
        minus = fn()
        array[index] = original
        grad[index] = (plus - minus) / (2 * H)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def separated(rng: np.random.Generator, shape) -> np.ndarray:
    """Distinct values at least 0.01 apart, so no kink lies within the step size."""
    count = int(np.prod(shape))
    return ((rng.permutation(count) - count / 2) * 0.01 + 0.005).reshape(shape)


class GradientCheck(unittest.TestCase):
    """Shared helper comparing backward() with central differences."""

    def assertGradientsMatch(self, build, arrays):
        """`build(*tensors)` returns an output tensor; checks d<out, R>/d(each input)."""
        tensors = [leaf(a) for a in arrays]
        out = build(*tensors)
        weights = np.random.default_rng(0).normal(size=out.shape) if out.values.ndim else np.array(1.0)
        out.backward(weights)
        for tensor in tensors:
            def objective():
                return float(np.sum(build(*tensors).values * weights))
            expected = numeric_grad(objective, tensor.values)
            self.assertLess(relative_error(tensor.grad, expected), TOLERANCE)


class TestGradients(GradientCheck):
    """Finite-difference checks for every differentiable op on random shapes."""

    def setUp(self):
        """Set up the shape generator."""
        self.rng = np.random.default_rng(1234)

    def test_conv2d(self):
        """Test convolution gradients for input, weights and bias."""
        for _ in range(20):
            c_in, c_out = self.rng.integers(1, 4, size=2)
            k = int(self.rng.choice([1, 3]))
            stride = int(self.rng.choice([1, 2]))
            pad = int(self.rng.integers(0, 2)) if k > 1 else 0
            size = k + stride * int(self.rng.integers(1, 4)) - 2 * pad
            x = self.rng.normal(size=(c_in, size, size + stride))
            w = self.rng.normal(size=(c_out, c_in, k, k))
            b = self.rng.normal(size=(c_out,))
            self.assertGradientsMatch(lambda x_, w_, b_: conv2d(x_, w_, b_, stride, pad), [x, w, b])

    def test_conv2d_transpose(self):
        """Test transposed convolution gradients for input and weights."""
        for _ in range(20):
            c_in, c_out = self.rng.integers(1, 4, size=2)
            stride = int(self.rng.integers(1, 4))
            k = int(self.rng.choice([stride, 2 * stride]))
            crop = int(self.rng.integers(0, k // 2 + 1)) if k > 1 else 0
            x = self.rng.normal(size=(c_in, int(self.rng.integers(1, 4)), int(self.rng.integers(1, 4))))
            w = self.rng.normal(size=(c_in, c_out, k, k))
            if stride * (min(x.shape[1:]) - 1) + k - 2 * crop <= 0:
                crop = 0
            self.assertGradientsMatch(lambda x_, w_: conv2d_transpose(x_, w_, stride, crop), [x, w])

    def test_maxpool2(self):
        """Test pooling routes gradients to window maxima, including odd sizes."""
        for _ in range(20):
            shape = (int(self.rng.integers(1, 4)), int(self.rng.integers(1, 7)), int(self.rng.integers(1, 7)))
            self.assertGradientsMatch(maxpool2, [separated(self.rng, shape)])

    def test_relu_and_sigmoid(self):
        """Test elementwise activations."""
        for _ in range(20):
            shape = (int(self.rng.integers(1, 4)), int(self.rng.integers(1, 6)), int(self.rng.integers(1, 6)))
            self.assertGradientsMatch(relu, [separated(self.rng, shape)])
            self.assertGradientsMatch(sigmoid, [self.rng.normal(size=shape) * 3])

    def test_crop_add_and_take_channels(self):
        """Test skip fusion and channel slicing."""
        for _ in range(20):
            c = int(self.rng.integers(2, 5))
            h, w = self.rng.integers(1, 5, size=2)
            dh, dw = self.rng.integers(0, 4, size=2)
            coarse = self.rng.normal(size=(c, h, w))
            skip = self.rng.normal(size=(c, h + dh, w + dw))
            self.assertGradientsMatch(crop_add, [coarse, skip])
            self.assertGradientsMatch(lambda t: take_channels(t, 1, c), [skip])

    def test_losses(self):
        """Test sigmoid and softmax cross-entropy gradients."""
        for _ in range(20):
            shape = (int(self.rng.integers(1, 5)), int(self.rng.integers(1, 6)), int(self.rng.integers(1, 6)))
            targets = self.rng.uniform(size=shape)
            scale = float(self.rng.uniform(0.1, 2.0))
            self.assertGradientsMatch(lambda z: sigmoid_ce_loss(z, targets, scale),
                                      [self.rng.normal(size=shape) * 2])
            labels = self.rng.integers(0, shape[0], size=shape[1:])
            self.assertGradientsMatch(lambda z: softmax_ce_loss(z, labels),
                                      [self.rng.normal(size=shape) * 2])

    def test_composed_graph(self):
        """Test a conv -> sigmoid -> deconv chain whose conv output is used twice."""
        x = self.rng.normal(size=(2, 8, 8))
        w1 = self.rng.normal(size=(3, 2, 3, 3))
        w2 = self.rng.normal(size=(3, 3, 4, 4))

        def net(x_, w1_, w2_):
            h = conv2d(x_, w1_, None, 1, 1)
            up = conv2d_transpose(sigmoid(h), w2_, 1, 1)
            return crop_add(h, up)

        self.assertGradientsMatch(net, [x, w1, w2])


class TestOracles(unittest.TestCase):
    """Compare ops against naive nested-loop references in 64-bit."""

    def setUp(self):
        """Set up random inputs."""
        self.rng = np.random.default_rng(99)

    def test_conv2d_matches_loops(self):
        """Test convolution against explicit receptive-field sums."""
        x = self.rng.normal(size=(8, 15, 15))
        w = self.rng.normal(size=(4, 8, 3, 3))
        b = self.rng.normal(size=(4,))
        for stride, pad in ((1, 1), (2, 1), (1, 0)):
            out = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64),
                         Tensor(b, dtype=np.float64), stride, pad).values
            padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
            expected = np.zeros_like(out)
            for o in range(out.shape[0]):
                for i in range(out.shape[1]):
                    for j in range(out.shape[2]):
                        window = padded[:, i * stride:i * stride + 3, j * stride:j * stride + 3]
                        expected[o, i, j] = np.sum(window * w[o]) + b[o]
            np.testing.assert_allclose(out, expected, atol=1e-6)

    def test_maxpool2_matches_loops(self):
        """Test pooling against explicit window maxima."""
        x = self.rng.normal(size=(8, 16, 15))
        out = maxpool2(Tensor(x, dtype=np.float64)).values
        self.assertEqual(out.shape, (8, 8, 8))
        for c in range(8):
            for i in range(8):
                for j in range(8):
                    self.assertEqual(out[c, i, j], x[c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max())

    def test_losses_match_loops(self):
        """Test both losses against per-pixel formulas."""
        z = self.rng.normal(size=(8, 16, 16)) * 3
        t = self.rng.uniform(size=z.shape)
        expected = 0.0
        for value, target in zip(z.ravel(), t.ravel()):
            s = 1.0 / (1.0 + np.exp(-value))
            expected -= target * np.log(s) + (1 - target) * np.log(1 - s)
        loss = sigmoid_ce_loss(Tensor(z, dtype=np.float64), t, 0.5).item()
        self.assertAlmostEqual(loss, 0.5 * expected / 8, delta=1e-6)

        labels = self.rng.integers(0, 8, size=(16, 16))
        expected = 0.0
        for i in range(16):
            for j in range(16):
                scores = z[:, i, j]
                expected -= scores[labels[i, j]] - np.log(np.sum(np.exp(scores)))
        loss = softmax_ce_loss(Tensor(z, dtype=np.float64), labels).item()
        self.assertAlmostEqual(loss, expected / 256, delta=1e-6)

    def test_transpose_is_adjoint(self):
        """Test <conv(x), y> == <x, conv_transpose(y)> for the same weights."""
        for stride, pad, k, size in ((1, 1, 3, 7), (2, 1, 4, 8), (2, 0, 2, 6), (3, 1, 5, 12)):
            x = self.rng.normal(size=(3, size, size))
            w = self.rng.normal(size=(4, 3, k, k))
            conv = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), None, stride, pad).values
            y = self.rng.normal(size=conv.shape)
            back = conv2d_transpose(Tensor(y, dtype=np.float64), Tensor(w, dtype=np.float64), stride, pad).values
            self.assertEqual(back.shape, x.shape)
            self.assertAlmostEqual(float(np.sum(conv * y)), float(np.sum(x * back)), places=8)

    def test_bilinear_filter(self):
        """Test the k=4 profile and that constant maps stay constant inside."""
        weights = bilinear_filter(4, 2).values
        np.testing.assert_allclose(weights[0, 0, 0], [0.0625, 0.1875, 0.1875, 0.0625])
        self.assertTrue(np.all(weights[0, 1] == 0))
        up = conv2d_transpose(Tensor(np.ones((2, 4, 4))), bilinear_filter(4, 2), 2, 1).values
        self.assertEqual(up.shape, (2, 8, 8))
        np.testing.assert_allclose(up[:, 1:-1, 1:-1], 1.0, rtol=1e-6)

    def test_shape_errors(self):
        """Test inconsistent shapes raise configuration errors."""
        x = Tensor(np.zeros((3, 5, 5)))
        with self.assertRaises(ConfigurationException):
            conv2d(x, Tensor(np.zeros((2, 4, 3, 3))), None)
        with self.assertRaises(ConfigurationException):
            conv2d(x, Tensor(np.zeros((2, 3, 2, 2))), None, stride=2)
        with self.assertRaises(ConfigurationException):
            crop_add(Tensor(np.zeros((3, 6, 6))), x)
        with self.assertRaises(ValidationException):
            sigmoid_ce_loss(x, np.full((3, 5, 5), 2.0))
        with self.assertRaises(ValidationException):
            softmax_ce_loss(x, np.full((5, 5), 3))

    def test_precision_context(self):
        """Test the default dtype switches inside the context only."""
        self.assertEqual(get_default_dtype(), np.float32)
        with precision(np.float64):
            self.assertEqual(Tensor([1.0]).dtype, np.float64)
        self.assertEqual(Tensor([1.0]).dtype, np.float32)

    def test_pixel_accuracy(self):
        """Test accuracy of argmax predictions."""
        logits = Tensor(np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))
        self.assertEqual(pixel_accuracy(logits, np.array([[0, 0]])), 0.5)


class TestOptimizer(unittest.TestCase):
    """Test SGD with momentum."""

    def test_momentum_update(self):
        """Test two steps follow v = m v + g, theta -= lr v."""
        param = Parameter("w", Tensor(np.array([1.0, 2.0]), dtype=np.float64))
        param.tensor.grad = np.array([0.5, -1.0])
        sgd_momentum_step([param], 0.1, 0.9)
        np.testing.assert_allclose(param.values, [0.95, 2.1])
        self.assertIsNone(param.tensor.grad)
        param.tensor.grad = np.array([0.5, -1.0])
        sgd_momentum_step([param], 0.1, 0.9)
        np.testing.assert_allclose(param.velocity, [0.95, -1.9])
        np.testing.assert_allclose(param.values, [0.855, 2.29])

    def test_frozen_parameter(self):
        """Test frozen parameters keep their values and lose their gradient."""
        param = Parameter("w", Tensor(np.array([1.0])), trainable=False)
        param.tensor.grad = np.array([3.0], dtype=np.float32)
        sgd_momentum_step([param], 0.1, 0.9)
        self.assertEqual(param.values[0], 1.0)
        self.assertIsNone(param.tensor.grad)

    def test_missing_gradient(self):
        """Test a trainable parameter without a gradient is an error."""
        param = Parameter("w", Tensor(np.array([1.0])))
        with self.assertRaises(InvalidStateError):
            sgd_momentum_step([param], 0.1, 0.9)

    def test_scale_grads(self):
        """Test gradient averaging over a batch."""
        param = Parameter("w", Tensor(np.array([1.0])))
        param.tensor.grad = np.array([4.0], dtype=np.float32)
        scale_grads([param], 0.25)
        self.assertEqual(param.tensor.grad[0], 1.0)


class TestCheckpoint(unittest.TestCase):
    """Test the CSEG checkpoint format."""

    def setUp(self):
        """Set up a temporary directory."""
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "net.cseg")

    def tearDown(self):
        """Clean up the temporary directory."""
        self.tmp.cleanup()

    def test_round_trip(self):
        """Test tensors read back bit for bit and in order."""
        rng = np.random.default_rng(5)
        params = [Parameter("conv1_1.weight", Tensor(rng.normal(size=(4, 3, 3, 3)))),
                  Parameter("conv1_1.bias", Tensor(rng.normal(size=(4,))))]
        save_checkpoint(self.path, params)
        loaded = load_checkpoint(self.path)
        self.assertEqual(list(loaded), ["conv1_1.weight", "conv1_1.bias"])
        for param in params:
            np.testing.assert_array_equal(loaded[param.name], param.values)

    def test_bad_magic(self):
        """Test foreign files are rejected."""
        with open(self.path, "wb") as f:
            f.write(b"NOPE" + bytes(8))
        with self.assertRaises(ResourceLoadError):
            load_checkpoint(self.path)

    def test_truncated(self):
        """Test truncated and padded files are rejected."""
        save_checkpoint(self.path, [Parameter("w", Tensor(np.ones((2, 2))))])
        with open(self.path, "rb") as f:
            raw = f.read()
        for corrupt in (raw[:-3], raw + b"\x00"):
            with open(self.path, "wb") as f:
                f.write(corrupt)
            with self.assertRaises(ResourceLoadError):
                load_checkpoint(self.path)


if __name__ == '__main__':
    unittest.main()
