"""
Unit tests for building, running, expanding, freezing and reloading FCNs.
"""
import os
import tempfile
import unittest
import numpy as np

from shared.constants import STAGE_STRIDE16, STAGE_STRIDE8
from shared.exceptions import ConfigurationException, InvalidStateError, ValidationException, ResourceLoadError
from core import Tensor, softmax_ce_loss
from heatmap import HeatmapStack, stack_input, image_input
from network import (
    FCNConfig,
    build_fcn,
    forward,
    expand_first_layer,
    enable_stage,
    set_trainable,
    all_layers,
    first_layer_only,
    layer_predicate,
    expected_parameter_count,
    save_network,
    load_network,
    parameter_snapshot,
    changed_parameters,
)

SMALL = FCNConfig(blocks=((1, 4), (2, 8), (1, 8)), head_kernels=(3, 1), head_width=16,
                  output_channels=8, train_size=16)


def randomize(net, seed: int = 0) -> None:
    """Give every parameter (biases and score layers included) nonzero values."""
    rng = np.random.default_rng(seed)
    for param in net.parameters():
        param.tensor.values[...] = rng.normal(scale=0.3, size=param.values.shape)


class TestBuildAndForward(unittest.TestCase):
    """Test network construction and the forward pass."""

    def test_same_seed_same_network(self):
        """Test initialisation is a pure function of the generator seed."""
        a = build_fcn(SMALL, np.random.default_rng(3))
        b = build_fcn(SMALL, np.random.default_rng(3))
        c = build_fcn(SMALL, np.random.default_rng(4))
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa.values, pb.values)
        self.assertTrue(changed_parameters(parameter_snapshot(a), c))

    def test_initialisation(self):
        """Test biases start at zero and upsamplers are bilinear."""
        net = build_fcn(SMALL, np.random.default_rng(0))
        self.assertTrue(np.all(net.bias("conv1_1").values == 0))
        self.assertIsNone(net.bias("deconv_32"))
        deconv = net.weight("deconv_32").values
        self.assertEqual(deconv.shape, (8, 8, 4, 4))
        self.assertEqual(deconv[0, 1].sum(), 0.0)
        self.assertGreater(deconv[0, 0].sum(), 0.0)

    def test_output_shape(self):
        """Test the score map has the input resolution for every stage set."""
        for stages in ({"stride32"}, {"stride32", STAGE_STRIDE16},
                       {"stride32", STAGE_STRIDE16, STAGE_STRIDE8}):
            net = build_fcn(SMALL.with_stages(stages), np.random.default_rng(0))
            out = forward(net, Tensor(np.random.default_rng(1).uniform(size=(3, 16, 24))))
            self.assertEqual(out.shape, (8, 16, 24))

    def test_parameter_count(self):
        """Test the built mini network matches the hand-counted total."""
        net = build_fcn(FCNConfig.mini(8), np.random.default_rng(0))
        self.assertEqual(net.parameter_count(), 203480)
        self.assertEqual(net.parameter_count(), expected_parameter_count(FCNConfig.mini(8)))

    def test_input_validation(self):
        """Test channel mismatches and sizes not divisible by the stride are rejected."""
        net = build_fcn(SMALL, np.random.default_rng(0))
        with self.assertRaises(ValidationException):
            forward(net, Tensor(np.zeros((4, 16, 16))))
        with self.assertRaises(ValidationException):
            forward(net, Tensor(np.zeros((3, 20, 16))))

    def test_backward_reaches_every_parameter(self):
        """Test a segmentation loss produces a gradient for every parameter."""
        net = build_fcn(SMALL.with_stages({"stride32", STAGE_STRIDE16, STAGE_STRIDE8}),
                        np.random.default_rng(0))
        randomize(net)
        labels = np.random.default_rng(2).integers(0, 8, size=(16, 16))
        softmax_ce_loss(forward(net, Tensor(np.random.default_rng(1).uniform(size=(3, 16, 16)))),
                        labels).backward()
        for param in net.parameters():
            self.assertIsNotNone(param.tensor.grad, param.name)
            self.assertEqual(param.tensor.grad.shape, param.values.shape)


class TestExpansion(unittest.TestCase):
    """Test first-layer expansion for guided inputs."""

    def setUp(self):
        """Set up a randomised unguided network."""
        self.net = build_fcn(SMALL.with_stages({"stride32", STAGE_STRIDE16}), np.random.default_rng(0))
        randomize(self.net)
        self.expanded = expand_first_layer(self.net, 68)

    def test_zero_guidance_is_bit_exact(self):
        """Test zero heatmaps reproduce the unguided logits exactly on 10 inputs."""
        rng = np.random.default_rng(8)
        for _ in range(10):
            image = rng.uniform(size=(16, 16, 3))
            plain = forward(self.net, image_input(image)).values
            guided = forward(self.expanded, stack_input(image, HeatmapStack(np.zeros((68, 16, 16))))).values
            np.testing.assert_array_equal(plain, guided)

    def test_parameter_delta(self):
        """Test exactly 68 x C1 x 3 x 3 weights are added."""
        out_c = self.net.weight("conv1_1").shape[0]
        self.assertEqual(self.expanded.parameter_count() - self.net.parameter_count(), 68 * out_c * 9)
        self.assertEqual(self.expanded.config.input_channels, 71)
        self.assertTrue(np.all(self.expanded.weight("conv1_1").values[:, 3:] == 0))

    def test_original_untouched(self):
        """Test the source network shares no arrays with the expanded copy."""
        before = parameter_snapshot(self.net)
        for param in self.expanded.parameters():
            param.tensor.values += 1.0
        self.assertEqual(changed_parameters(before, self.net), [])

    def test_velocity_reset(self):
        """Test momentum buffers start from zero after expansion."""
        self.net.param("fc8_conv.weight").velocity[...] = 1.0
        expanded = expand_first_layer(self.net, 68)
        self.assertTrue(np.all(expanded.param("fc8_conv.weight").velocity == 0))

    def test_double_expansion(self):
        """Test an already guided network cannot be expanded again."""
        with self.assertRaises(InvalidStateError):
            expand_first_layer(self.expanded, 68)


class TestStagesAndFreezing(unittest.TestCase):
    """Test enabling skip stages and selecting trainable layers."""

    def setUp(self):
        """Set up a randomised stride32 network."""
        self.net = build_fcn(SMALL, np.random.default_rng(0))
        randomize(self.net)
        self.x = Tensor(np.random.default_rng(5).uniform(size=(3, 16, 16)))

    def test_enable_stage_is_neutral(self):
        """Test a freshly enabled stage leaves the output unchanged and shares parameters."""
        before = forward(self.net, self.x).values
        net16 = enable_stage(self.net, STAGE_STRIDE16)
        np.testing.assert_array_equal(forward(net16, self.x).values, before)
        self.assertIs(net16.param("fc8_conv.weight"), self.net.param("fc8_conv.weight"))
        net16.weight("score_pool4").values[...] = 0.5
        self.assertFalse(np.array_equal(forward(net16, self.x).values, before))

    def test_stage_order(self):
        """Test stride8 cannot be enabled before stride16."""
        with self.assertRaises(ConfigurationException):
            enable_stage(self.net, STAGE_STRIDE8)
        with self.assertRaises(ConfigurationException):
            enable_stage(self.net, "stride4")
        self.assertIs(enable_stage(self.net, "stride32"), self.net)

    def test_first_layer_only(self):
        """Test freezing everything but the first convolution."""
        self.assertEqual(set_trainable(self.net, first_layer_only), ["conv1_1"])
        self.assertEqual(self.net.trainable_layers(), ["conv1_1"])
        set_trainable(self.net, all_layers)
        self.assertEqual(self.net.trainable_layers(), self.net.layer_names())

    def test_pattern_predicate(self):
        """Test glob patterns select matching layers."""
        matched = set_trainable(self.net, layer_predicate("conv2_*, fc8_conv"))
        self.assertEqual(matched, ["conv2_1", "conv2_2", "fc8_conv"])
        with self.assertRaises(ConfigurationException):
            layer_predicate(" , ")

    def test_no_match_warns(self):
        """Test an empty selection freezes everything with a warning."""
        with self.assertLogs("cascadeseg.FCN", level="WARNING"):
            self.assertEqual(set_trainable(self.net, layer_predicate("nothing_*")), [])
        self.assertEqual(self.net.trainable_layers(), [])


class TestNetworkCheckpoint(unittest.TestCase):
    """Test saving and rebuilding networks from checkpoints."""

    def setUp(self):
        """Set up a temporary directory."""
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "net.cseg")

    def tearDown(self):
        """Clean up the temporary directory."""
        self.tmp.cleanup()

    def test_round_trip_infers_config(self):
        """Test a guided stride16 network reloads with its architecture and outputs."""
        net = expand_first_layer(enable_stage(build_fcn(SMALL, np.random.default_rng(0)), STAGE_STRIDE16), 68)
        randomize(net)
        save_network(net, self.path)
        loaded = load_network(self.path, SMALL)
        self.assertEqual(loaded.config, net.config)
        self.assertEqual(changed_parameters(parameter_snapshot(net), loaded), [])
        x = Tensor(np.random.default_rng(1).uniform(size=(71, 16, 16)))
        np.testing.assert_array_equal(forward(loaded, x).values, forward(net, x).values)

    def test_incomplete_checkpoint(self):
        """Test checkpoints missing required layers are rejected."""
        from core import Parameter, save_checkpoint
        save_checkpoint(self.path, [Parameter("conv1_1.weight", Tensor(np.zeros((4, 3, 3, 3))))])
        with self.assertRaises(ResourceLoadError):
            load_network(self.path)


if __name__ == '__main__':
    unittest.main()
