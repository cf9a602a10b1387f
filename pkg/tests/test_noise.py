"""
Unit tests for the detector noise model.
"""
import os
import tempfile
import unittest
import numpy as np

from shared.types import LandmarkSet
from shared.exceptions import ValidationException, ResourceLoadError
from noise import NoiseModel, fit_noise_model, perturb, save_noise_model, load_noise_model
from pipeline.synth import face_template, _to_pixels


class TestFitNoiseModel(unittest.TestCase):
    """Test fitting displacement statistics."""

    def setUp(self):
        """Set up a template face and a known displacement distribution."""
        self.truth = LandmarkSet(_to_pixels(face_template(), 64))
        self.mean = np.array([0.8, -0.5])
        self.cov = np.array([[4.0, 1.2], [1.2, 2.25]])

    def test_recovers_generating_distribution(self):
        """Test 10,000 displaced pairs recover the mean and covariance."""
        rng = np.random.default_rng(21)
        n = 10_000
        offsets = rng.multivariate_normal(self.mean, self.cov, size=(n, 68))
        predicted = [LandmarkSet(self.truth.points + offsets[i]) for i in range(n)]
        model = fit_noise_model(predicted, [self.truth] * n)

        np.testing.assert_allclose(model.means, np.tile(self.mean, (68, 1)), atol=0.1)
        for k in range(68):
            np.testing.assert_allclose(model.covariances[k], self.cov, atol=0.1 * np.abs(self.cov).max())
        self.assertAlmostEqual(model.face_size_ref, self.truth.face_height())

    def test_single_pair(self):
        """Test one pair gives its displacement as mean and zero covariance."""
        shifted = self.truth.translated(1.0, 2.0)
        model = fit_noise_model([shifted], [self.truth])
        np.testing.assert_allclose(model.means, np.tile([1.0, 2.0], (68, 1)))
        self.assertTrue(np.all(model.covariances == 0))

    def test_mismatched_lists(self):
        """Test empty or unequal lists are rejected."""
        with self.assertRaises(ValidationException):
            fit_noise_model([], [])
        with self.assertRaises(ValidationException):
            fit_noise_model([self.truth], [self.truth, self.truth])

    def test_full_covariance_fallback(self):
        """Test too few samples for the joint model fall back with a warning."""
        predicted = [self.truth.translated(0.1 * k, 0.0) for k in range(5)]
        with self.assertLogs("cascadeseg.NOISE", level="WARNING"):
            model = fit_noise_model(predicted, [self.truth] * 5, full_covariance=True)
        self.assertIsNone(model.joint_covariance)


class TestPerturb(unittest.TestCase):
    """Test sampling displaced landmark sets."""

    def setUp(self):
        """Set up a template face."""
        self.truth = LandmarkSet(_to_pixels(face_template(), 64))

    def test_zero_model(self):
        """Test the zero model never moves a landmark."""
        model = NoiseModel.zero(self.truth.face_height())
        self.assertEqual(perturb(self.truth, model, np.random.default_rng(0)), self.truth)

    def test_mean_scales_with_face_height(self):
        """Test displacements scale with the face height relative to the reference."""
        means = np.tile([1.0, -2.0], (68, 1))
        model = NoiseModel(means, np.zeros((68, 2, 2)), self.truth.face_height() / 2.0)
        moved = perturb(self.truth, model, np.random.default_rng(0))
        np.testing.assert_allclose(moved.points - self.truth.points, 2.0 * means)

    def test_seeded(self):
        """Test equal seeds give equal draws."""
        covariances = np.tile(np.eye(2), (68, 1, 1))
        model = NoiseModel(np.zeros((68, 2)), covariances, self.truth.face_height())
        a = perturb(self.truth, model, np.random.default_rng(9))
        b = perturb(self.truth, model, np.random.default_rng(9))
        self.assertEqual(a, b)
        self.assertNotEqual(a, self.truth)

    def test_monte_carlo_mean(self):
        """Test the average displacement of many draws matches the model mean within 3 standard errors."""
        mean = np.array([0.7, -1.3])
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        model = NoiseModel(np.tile(mean, (68, 1)), np.tile(cov, (68, 1, 1)), self.truth.face_height())
        rng = np.random.default_rng(33)
        draws = 1000
        total = np.zeros(2)
        for _ in range(draws):
            total += (perturb(self.truth, model, rng).points - self.truth.points).mean(axis=0)
        observed = total / draws
        standard_error = np.sqrt(np.diag(cov) / (draws * 68))
        self.assertTrue(np.all(np.abs(observed - mean) <= 3.0 * standard_error), observed)


class TestNoiseIO(unittest.TestCase):
    """Test the text format."""

    def test_round_trip(self):
        """Test saved models load back exactly."""
        rng = np.random.default_rng(4)
        a = rng.normal(size=(68, 2, 2))
        model = NoiseModel(rng.normal(size=(68, 2)), a @ a.transpose(0, 2, 1), 57.25)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "noise_model.txt")
            save_noise_model(path, model)
            loaded = load_noise_model(path)
        np.testing.assert_array_equal(loaded.means, model.means)
        np.testing.assert_array_equal(loaded.covariances[:, 0, 0], model.covariances[:, 0, 0])
        np.testing.assert_array_equal(loaded.covariances[:, 0, 1], model.covariances[:, 0, 1])
        np.testing.assert_array_equal(loaded.covariances[:, 1, 1], model.covariances[:, 1, 1])
        self.assertEqual(loaded.face_size_ref, 57.25)

    def test_file_text_is_plain_numbers(self):
        """Test every value in the file parses as a float, numpy scalars included."""
        model = NoiseModel(np.full((68, 2), 0.25), np.tile(np.eye(2), (68, 1, 1)), np.float64(40.5))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "noise_model.txt")
            save_noise_model(path, model)
            with open(path) as f:
                lines = f.read().splitlines()
        self.assertEqual(lines[0], "face_size_ref 40.5")
        self.assertEqual(len(lines), 69)
        for line in lines[1:]:
            values = [float(v) for v in line.split()]
            self.assertEqual(len(values), 6)
        self.assertEqual(lines[1], "1 0.25 0.25 1.0 0.0 1.0")

    def test_joint_covariance_round_trip(self):
        """Test the full-covariance variant keeps its joint matrix through save and load."""
        rng = np.random.default_rng(6)
        a = rng.normal(size=(136, 136))
        joint = a @ a.T
        covariances = np.stack([joint[2 * k:2 * k + 2, 2 * k:2 * k + 2] for k in range(68)])
        model = NoiseModel(rng.normal(size=(68, 2)), covariances, 50.0, joint)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "noise_model.txt")
            save_noise_model(path, model)
            loaded = load_noise_model(path)
        np.testing.assert_array_equal(loaded.joint_covariance, joint)
        np.testing.assert_array_equal(loaded.means, model.means)

    def test_truncated_joint_block(self):
        """Test a joint block with missing rows is rejected."""
        model = NoiseModel(np.zeros((68, 2)), np.zeros((68, 2, 2)), 10.0, np.eye(136))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "noise_model.txt")
            save_noise_model(path, model)
            with open(path) as f:
                lines = f.read().splitlines()
            with open(path, "w") as f:
                f.write("\n".join(lines[:-1]) + "\n")
            with self.assertRaises(ResourceLoadError):
                load_noise_model(path)

    def test_malformed(self):
        """Test truncated files are rejected."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "noise_model.txt")
            with open(path, "w") as f:
                f.write("face_size_ref 10.0\n1 0 0 1 0 1\n")
            with self.assertRaises(ResourceLoadError):
                load_noise_model(path)


if __name__ == '__main__':
    unittest.main()
