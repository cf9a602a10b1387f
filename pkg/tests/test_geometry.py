"""
Unit tests for rasterization, brow strokes, part masks, normalisation and file I/O.
"""
import os
import tempfile
import unittest
import numpy as np
import pygame

from shared.constants import EYEBROW_WIDTH_FRAC
from shared.types import ClassId, LandmarkSet, SegMask
from shared.exceptions import ValidationException, ResourceLoadError
from geometry import (
    rasterize_polygon,
    polygon_area,
    catmull_rom_chain,
    eyebrow_stroke,
    landmarks_to_mask,
    component_polygons,
    fold_seven_classes,
    normalize_face,
    jitter_sample,
    fit_width,
    face_box,
    resample,
    occlusion_augment,
    parse_pts_text,
    parse_pts,
    write_pts,
    save_mask_png,
    load_mask_png,
    save_image_png,
    load_image_png,
)
from geometry.masks import NOSE_OUTLINE
from pipeline.synth import face_template, _to_pixels


def template_face(size: int) -> LandmarkSet:
    """The undeformed synthetic template placed in a size x size frame."""
    return LandmarkSet(_to_pixels(face_template(), size))


def point_in_polygon(px: float, py: float, pts: np.ndarray) -> bool:
    """Naive even-odd ray cast towards +x."""
    inside = False
    for k in range(len(pts)):
        ax, ay = pts[k]
        bx, by = pts[(k + 1) % len(pts)]
        if (ay > py) != (by > py):
            crossing = (bx - ax) * (py - ay) / (by - ay) + ax
            if px < crossing:
                inside = not inside
    return inside


class TestRasterize(unittest.TestCase):
    """Test scanline polygon filling."""

    def test_axis_aligned_square(self):
        """Test a square covers exactly the pixels whose centers fall inside."""
        mask = rasterize_polygon([(1, 1), (4, 1), (4, 4), (1, 4)], 6, 6)
        expected = np.zeros((6, 6), dtype=bool)
        expected[1:4, 1:4] = True
        np.testing.assert_array_equal(mask, expected)

    def test_too_few_vertices(self):
        """Test two vertices are rejected."""
        with self.assertRaises(ValidationException):
            rasterize_polygon([(0, 0), (3, 3)], 8, 8)

    def test_polygon_outside_grid(self):
        """Test a polygon entirely off the grid paints nothing."""
        mask = rasterize_polygon([(-10, -10), (-5, -10), (-5, -5)], 8, 8)
        self.assertFalse(mask.any())

    def test_bow_tie_even_odd(self):
        """Test overlapping lobes of a self-intersecting polygon are both filled."""
        mask = rasterize_polygon([(0, 0), (8, 8), (8, 0), (0, 8)], 8, 8)
        self.assertTrue(mask[4, 1])
        self.assertTrue(mask[4, 6])
        self.assertFalse(mask[1, 4])

    def test_matches_point_in_polygon_oracle(self):
        """Test 100 random polygons agree with a per-pixel ray cast everywhere."""
        rng = np.random.default_rng(7)
        size = 64
        for _ in range(100):
            count = int(rng.integers(3, 9))
            pts = rng.uniform(-8, size + 8, size=(count, 2))
            mask = rasterize_polygon(pts, size, size)
            oracle = np.array([[point_in_polygon(j + 0.5, i + 0.5, pts) for j in range(size)]
                               for i in range(size)])
            np.testing.assert_array_equal(mask, oracle)


class TestSpline(unittest.TestCase):
    """Test Catmull-Rom sampling and stroke outlines."""

    def test_polygon_area(self):
        """Test the shoelace area of a unit square."""
        self.assertAlmostEqual(polygon_area([(0, 0), (1, 0), (1, 1), (0, 1)]), 1.0)

    def test_chain_interpolates_control_points(self):
        """Test the spline passes through every control point."""
        points = np.array([(0, 0), (3, 2), (7, 3), (10, 1), (14, 0)], dtype=float)
        chain = catmull_rom_chain(points, samples_per_span=8)
        self.assertEqual(len(chain), 4 * 8 + 1)
        np.testing.assert_allclose(chain[::8], points, atol=1e-9)

    def test_straight_stroke_area(self):
        """Test a straight brow stroke is a width x length rectangle."""
        brow = [(10 * k, 0.0) for k in range(5)]
        outline = eyebrow_stroke(brow, 4.0)
        self.assertAlmostEqual(polygon_area(outline), 160.0, places=6)

    def test_stroke_rejects_bad_input(self):
        """Test non-positive widths and wrong point counts raise."""
        brow = [(10 * k, 0.0) for k in range(5)]
        with self.assertRaises(ValidationException):
            eyebrow_stroke(brow, 0.0)
        with self.assertRaises(ValidationException):
            eyebrow_stroke(brow[:4], 2.0)

    def test_coincident_points(self):
        """Test repeated brow points still give a finite outline."""
        brow = [(0, 0), (0, 0), (5, 1), (10, 1), (10, 1)]
        outline = eyebrow_stroke(brow, 2.0)
        self.assertTrue(np.all(np.isfinite(outline)))
        self.assertGreater(polygon_area(outline), 0.0)

    def test_arch_is_mirror_symmetric(self):
        """Test a symmetric arch gives an outline symmetric about its vertical midline."""
        arch = [(-20.0, 0.0), (-10.0, -6.0), (0.0, -8.0), (10.0, -6.0), (20.0, 0.0)]
        outline = eyebrow_stroke(arch, 3.0)
        mirrored = outline * np.array([-1.0, 1.0])
        gaps = np.linalg.norm(mirrored[:, None, :] - outline[None, :, :], axis=2).min(axis=1)
        self.assertLessEqual(float(gaps.max()), 1.0)

    def test_area_vanishes_with_width(self):
        """Test the stroke area shrinks towards zero with its width."""
        arch = [(-20.0, 0.0), (-10.0, -6.0), (0.0, -8.0), (10.0, -6.0), (20.0, 0.0)]
        areas = [polygon_area(eyebrow_stroke(arch, width)) for width in (2.0, 0.2, 1e-6)]
        self.assertGreater(areas[0], areas[1])
        self.assertGreater(areas[1], areas[2])
        self.assertLess(areas[2], 1e-3)


class TestMasks(unittest.TestCase):
    """Test part masks built from landmarks."""

    def setUp(self):
        """Set up a template face."""
        self.size = 128
        self.landmarks = template_face(self.size)

    def test_every_class_painted(self):
        """Test the template face produces all eight classes."""
        mask = landmarks_to_mask(self.landmarks, self.size, self.size)
        self.assertEqual((mask.height, mask.width), (self.size, self.size))
        self.assertTrue(np.all(mask.histogram() > 0))

    def test_face_outside_frame(self):
        """Test a face shifted off the canvas leaves only background."""
        far = self.landmarks.translated(10 * self.size, 0)
        mask = landmarks_to_mask(far, self.size, self.size)
        self.assertTrue(np.all(mask.labels == ClassId.BACKGROUND))

    def test_invalid_size(self):
        """Test zero-sized masks are rejected."""
        with self.assertRaises(ValidationException):
            landmarks_to_mask(self.landmarks, 0, self.size)

    def test_nose_tip_inside_outline(self):
        """Test the tip left off the nose outline still falls inside it."""
        x, y = self.landmarks.point(31)
        self.assertNotIn(31, NOSE_OUTLINE)
        self.assertTrue(point_in_polygon(x, y, self.landmarks.select(NOSE_OUTLINE)))

    def test_fold_seven_classes(self):
        """Test background merges into skin and other ids shift down."""
        mask = SegMask.from_labels(np.array([[0, 1, 2, 3], [4, 5, 6, 7]], dtype=np.uint8))
        folded = fold_seven_classes(mask)
        np.testing.assert_array_equal(folded.labels, [[0, 0, 1, 2], [3, 4, 5, 6]])

    def test_classes_match_point_in_polygon_oracle(self):
        """Test every pixel's class matches a ray-cast oracle painted in the same order."""
        size = 64
        landmarks = template_face(size)
        brow_width = EYEBROW_WIDTH_FRAC * size
        mask = landmarks_to_mask(landmarks, size, size, EYEBROW_WIDTH_FRAC)
        oracle = np.full((size, size), ClassId.BACKGROUND, dtype=np.uint8)
        for class_id, polygon in component_polygons(landmarks, brow_width):
            for i in range(size):
                for j in range(size):
                    if point_in_polygon(j + 0.5, i + 0.5, polygon):
                        oracle[i, j] = class_id
        np.testing.assert_array_equal(mask.labels, oracle)
        np.testing.assert_array_equal(mask.histogram(), np.bincount(oracle.ravel(), minlength=8))


class TestNormalize(unittest.TestCase):
    """Test face cropping, rescaling and jitter."""

    def setUp(self):
        """Set up an image with a face in its middle."""
        rng = np.random.default_rng(3)
        self.image = rng.uniform(0, 1, size=(160, 160, 3))
        self.landmarks = template_face(128).translated(16, 16)

    def test_output_height_and_landmarks(self):
        """Test the output has the target height and keeps landmarks inside."""
        sample = normalize_face(self.image, self.landmarks, 64, 0.0, None, margin=0.05)
        self.assertEqual(sample.height, 64)
        self.assertEqual(sample.mask.labels.shape, (64, sample.width))
        self.assertTrue(np.all(sample.landmarks.points[:, 1] >= 0))
        self.assertTrue(np.all(sample.landmarks.points[:, 1] <= 64))

    def test_jitter_needs_generator(self):
        """Test a positive jitter without a generator is rejected."""
        with self.assertRaises(ValidationException):
            normalize_face(self.image, self.landmarks, 64, 0.1, None)

    def test_jitter_is_seeded(self):
        """Test equal seeds give equal crops."""
        a = normalize_face(self.image, self.landmarks, 64, 0.1, np.random.default_rng(5))
        b = normalize_face(self.image, self.landmarks, 64, 0.1, np.random.default_rng(5))
        np.testing.assert_array_equal(a.image, b.image)
        self.assertEqual(a.landmarks, b.landmarks)

    def test_degenerate_box(self):
        """Test a zero-area landmark box is rejected."""
        flat = LandmarkSet(np.zeros((68, 2)))
        with self.assertRaises(ValidationException):
            face_box(flat)

    def test_fit_width_and_jitter_sample(self):
        """Test canvas fitting and per-step jitter keep the frame size."""
        sample = normalize_face(self.image, self.landmarks, 64, 0.0, None, margin=0.05)
        fitted = fit_width(sample, 64)
        self.assertEqual((fitted.height, fitted.width), (64, 64))
        self.assertIs(jitter_sample(fitted, 0.0, np.random.default_rng(0)), fitted)
        moved = jitter_sample(fitted, 0.05, np.random.default_rng(0))
        self.assertEqual(moved.image.shape, fitted.image.shape)
        shift = moved.landmarks.points - fitted.landmarks.points
        np.testing.assert_allclose(shift, shift[0:1].repeat(68, axis=0))

    def test_halving_is_a_similarity(self):
        """Test a 700-px face normalised to 350 px halves every landmark distance."""
        template = template_face(128).points
        span = template.max(axis=0) - template.min(axis=0)
        points = (template - template.min(axis=0)) * (699.0 / span[1]) + 10.0
        landmarks = LandmarkSet(points)
        image = np.random.default_rng(1).uniform(0, 1, size=(720, 760, 3))
        sample = normalize_face(image, landmarks, 350, 0.0, None, margin=0.0)

        def distances(pts: np.ndarray) -> np.ndarray:
            return np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)

        self.assertEqual(sample.height, 350)
        np.testing.assert_allclose(distances(sample.landmarks.points), 0.5 * distances(points),
                                   rtol=1e-6, atol=1e-9)
        offset = np.array([round(points[:, 0].min()), 10.0])
        np.testing.assert_allclose(sample.landmarks.points, 0.5 * (points - offset), atol=1e-9)

    def test_resample_crops_and_pads_black(self):
        """Test an unscaled window copies 8-bit pixels and leaves off-image pixels black."""
        pixels = np.random.default_rng(2).integers(0, 256, size=(12, 10, 3))
        image = pixels / 255.0
        window = resample(image, 2, 3, 6, 5, 6, 5)
        np.testing.assert_array_equal(window, image[3:8, 2:8])
        padded = resample(image, -4, 0, 10, 12, 10, 12)
        self.assertTrue(np.all(padded[:, :4] == 0.0))
        np.testing.assert_array_equal(padded[:, 4:], image[:, :6])

    def test_resample_scales_with_smoothscale(self):
        """Test a constant image stays constant when rescaled."""
        image = np.full((20, 30, 3), 128 / 255.0)
        out = resample(image, 0, 0, 30, 20, 15, 10)
        self.assertEqual(out.shape, (10, 15, 3))
        np.testing.assert_allclose(out, 128 / 255.0, atol=1.5 / 255.0)


class TestAugment(unittest.TestCase):
    """Test occlusion augmentation."""

    def setUp(self):
        """Set up a constant image and mask."""
        self.image = np.full((32, 32, 3), 0.5)
        self.mask = SegMask.from_labels(np.ones((32, 32), dtype=np.uint8))

    def test_probability_zero(self):
        """Test nothing is occluded at probability 0 but a copy is returned."""
        out = occlusion_augment(self.image, self.mask, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(out, self.image)
        self.assertIsNot(out, self.image)

    def test_probability_one(self):
        """Test one rectangle is blacked out and labels are untouched."""
        out = occlusion_augment(self.image, self.mask, 1.0, np.random.default_rng(0))
        zeros = np.all(out == 0.0, axis=2)
        rows, cols = np.nonzero(zeros)
        self.assertGreater(zeros.sum(), 0)
        self.assertEqual(zeros.sum(), (np.ptp(rows) + 1) * (np.ptp(cols) + 1))
        self.assertTrue(np.all(self.mask.labels == 1))
        self.assertTrue(np.all(self.image == 0.5))

    def test_bad_probability(self):
        """Test probabilities outside [0, 1] raise."""
        with self.assertRaises(ValidationException):
            occlusion_augment(self.image, self.mask, 1.5, np.random.default_rng(0))

    def test_same_seed_same_occluder(self):
        """Test equal seeds black out the same rectangle."""
        a = occlusion_augment(self.image, self.mask, 1.0, np.random.default_rng(12))
        b = occlusion_augment(self.image, self.mask, 1.0, np.random.default_rng(12))
        np.testing.assert_array_equal(a, b)


class TestPtsIO(unittest.TestCase):
    """Test 300-W pts parsing and writing."""

    def _text(self, count: int, close: bool = True) -> str:
        body = "\n".join(f"{k}.5 {2 * k}.25" for k in range(count))
        return f"version: 1\nn_points: {count}\n{{\n{body}\n" + ("}\n" if close else "")

    def test_parse(self):
        """Test a well-formed file parses in order."""
        landmarks = parse_pts_text(self._text(68))
        self.assertEqual(landmarks.point(1), (0.5, 0.25))
        self.assertEqual(landmarks.point(68), (67.5, 134.25))

    def test_wrong_point_count(self):
        """Test 66-point annotations are rejected."""
        with self.assertRaises(ResourceLoadError):
            parse_pts_text(self._text(66))

    def test_missing_brace(self):
        """Test a truncated file is rejected."""
        with self.assertRaises(ResourceLoadError):
            parse_pts_text(self._text(68, close=False))

    def test_round_trip(self):
        """Test written landmarks read back exactly."""
        landmarks = LandmarkSet(np.random.default_rng(1).uniform(0, 100, size=(68, 2)))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "face.pts")
            write_pts(path, landmarks)
            self.assertEqual(parse_pts(path), landmarks)

    def test_missing_file(self):
        """Test an absent file raises a load error."""
        with self.assertRaises(ResourceLoadError):
            parse_pts("/nonexistent/face.pts")


class TestPngIO(unittest.TestCase):
    """Test PNG round trips through pygame."""

    def setUp(self):
        """Set up test environment."""
        pygame.init()

    def tearDown(self):
        """Clean up test environment."""
        pygame.quit()

    def test_mask_round_trip(self):
        """Test label masks survive PNG encoding bit for bit."""
        labels = np.random.default_rng(2).integers(0, 8, size=(24, 40)).astype(np.uint8)
        mask = SegMask.from_labels(labels)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "mask.png")
            save_mask_png(path, mask)
            loaded = load_mask_png(path)
        np.testing.assert_array_equal(loaded.labels, labels)

    def test_image_round_trip(self):
        """Test 8-bit representable images survive PNG encoding."""
        pixels = np.random.default_rng(4).integers(0, 256, size=(16, 20, 3))
        image = pixels / 255.0
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "image.png")
            save_image_png(path, image)
            loaded = load_image_png(path)
        np.testing.assert_allclose(loaded, image, atol=1e-12)

    def test_missing_image(self):
        """Test an absent image raises a load error."""
        with self.assertRaises(ResourceLoadError):
            load_image_png("/nonexistent/image.png")


if __name__ == '__main__':
    unittest.main()
