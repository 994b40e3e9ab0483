"""
Tests for the tangent-subspace classifier.
"""

import os
import sys
import time
import unittest

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import (
    DegenerateImage, DimensionMismatch, InvalidConfig, InvalidCorpus, UnknownTransform,
)
from core.glyphs import gen_synthetic_glyphs
from core.tangent_classifier import (
    BENCH_COLUMNS, GLYPH_SHAPE, LabeledCorpus, TangentBasis, Transform, apply_transform,
    as_glyph, build_tangent_subspace, classify_l2_baseline, classify_tangent,
    classify_tangent_naive, distance_to_subspace, orthonormalize, run_benchmark,
    subspace_distances,
)


def gaussian_blob(row=7.5, col=7.5, sigma=2.5):
    r, c = np.mgrid[0:16, 0:16]
    return np.exp(-((r - row) ** 2 + (c - col) ** 2) / (2 * sigma ** 2))


def one_hot(row, col):
    img = np.zeros(GLYPH_SHAPE)
    img[row, col] = 1.0
    return img


def lstsq_distance(x, origin, directions):
    """Independent oracle: min over c of |x - origin - D c|."""
    r = x - origin
    c = np.linalg.lstsq(directions.T, r, rcond=None)[0]
    return float(np.linalg.norm(r - directions.T @ c))


class TestTransforms(unittest.TestCase):
    """Test the seven image transforms."""

    def test_zero_strength_is_identity(self):
        img = gaussian_blob(6.0, 9.0)
        for which in Transform.ALL:
            out = apply_transform(img, which, 0.0)
            np.testing.assert_array_equal(out, img)
            self.assertIsNot(out, img)

    def test_translate_moves_one_pixel(self):
        """A single lit pixel moves one column (x) or one row (y)."""
        moved = apply_transform(one_hot(5, 5), Transform.TRANSLATE_X, 1.0)
        np.testing.assert_allclose(moved, one_hot(5, 6), atol=1e-12)
        moved = apply_transform(one_hot(5, 5), Transform.TRANSLATE_Y, 1.0)
        np.testing.assert_allclose(moved, one_hot(6, 5), atol=1e-12)

    def test_translations_accept_large_shifts(self):
        out = apply_transform(one_hot(5, 5), Transform.TRANSLATE_X, 3.0)
        np.testing.assert_allclose(out, one_hot(5, 8), atol=1e-12)

    def test_rotate_round_trip(self):
        """Rotating forward and back loses at most bilinear interpolation error."""
        img = gaussian_blob(7.0, 8.5, sigma=2.5)
        there = apply_transform(img, Transform.ROTATE, 0.3)
        back = apply_transform(there, Transform.ROTATE, -0.3)
        self.assertLessEqual(np.max(np.abs(back - img)), 0.08)

    def test_thicken_spreads_to_neighbours(self):
        out = apply_transform(one_hot(4, 4), Transform.THICKEN, 1.0)
        expected = np.zeros(GLYPH_SHAPE)
        expected[3:6, 3:6] = 1.0
        np.testing.assert_array_equal(out, expected)

        half = apply_transform(one_hot(4, 4), Transform.THICKEN, 0.5)
        self.assertEqual(half[4, 4], 1.0)
        self.assertEqual(half[3, 3], 0.5)

    def test_scale_grows_blob(self):
        img = gaussian_blob(sigma=2.0)
        bigger = apply_transform(img, Transform.SCALE, 0.3)
        self.assertGreater(bigger.sum(), img.sum())

    def test_output_in_unit_range(self):
        img = np.random.default_rng(0).random(GLYPH_SHAPE)
        for which in Transform.ALL:
            out = apply_transform(img, which, 0.4)
            self.assertGreaterEqual(out.min(), 0.0)
            self.assertLessEqual(out.max(), 1.0)

    def test_errors(self):
        img = gaussian_blob()
        with self.assertRaises(UnknownTransform):
            apply_transform(img, "mirror", 0.1)
        with self.assertRaises(InvalidConfig):
            apply_transform(img, Transform.ROTATE, 1.5)
        with self.assertRaises(DimensionMismatch):
            apply_transform(np.zeros(255), Transform.ROTATE, 0.1)
        with self.assertRaises(DegenerateImage):
            as_glyph(np.full(256, np.nan))


class TestOrthonormalize(unittest.TestCase):
    """Test Gram-Schmidt."""

    def test_orthonormal_columns(self):
        V = np.random.default_rng(1).normal(size=(5, 20))
        Q, kept = orthonormalize(V)
        self.assertEqual(kept, [0, 1, 2, 3, 4])
        np.testing.assert_allclose(Q.T @ Q, np.eye(5), atol=1e-12)

    def test_dependent_direction_dropped(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 2.0, 0.0])
        Q, kept = orthonormalize([a, b, a + b, np.zeros(3)])
        self.assertEqual(kept, [0, 1])
        self.assertEqual(Q.shape, (3, 2))

    def test_all_zero(self):
        Q, kept = orthonormalize(np.zeros((3, 4)))
        self.assertEqual(Q.shape, (4, 0))
        self.assertEqual(kept, [])


class TestTangentSubspace(unittest.TestCase):
    """Test tangent subspace construction and distances."""

    def test_centered_blob_rank(self):
        """A centred blob keeps at least four directions."""
        basis = build_tangent_subspace(gaussian_blob())
        self.assertGreaterEqual(basis.k, 4)
        self.assertLessEqual(basis.k, 7)
        np.testing.assert_allclose(basis.Q.T @ basis.Q, np.eye(basis.k), atol=1e-10)

    def test_blank_image(self):
        """Blank image: no directions, distance falls back to plain L2."""
        basis = build_tangent_subspace(np.zeros(GLYPH_SHAPE))
        self.assertEqual(basis.k, 0)
        x = np.random.default_rng(2).random(256)
        self.assertAlmostEqual(distance_to_subspace(x, basis), np.linalg.norm(x), places=12)

    def test_epsilon_range(self):
        with self.assertRaises(InvalidConfig):
            build_tangent_subspace(gaussian_blob(), epsilon=0.0)
        with self.assertRaises(InvalidConfig):
            build_tangent_subspace(gaussian_blob(), epsilon=0.6)
        with self.assertRaises(InvalidConfig):
            build_tangent_subspace(gaussian_blob(), shift_epsilon=0.0)

    def test_origin_distance_zero(self):
        img = gaussian_blob(6.0, 9.0)
        basis = build_tangent_subspace(img)
        self.assertAlmostEqual(distance_to_subspace(img, basis), 0.0, places=12)

    def test_truncation_monotone(self):
        """Adding directions never increases distance."""
        img = gaussian_blob(6.5, 8.0, sigma=1.8)
        basis = build_tangent_subspace(img)
        x = gaussian_blob(7.5, 7.0, sigma=2.2).ravel()
        distances = [distance_to_subspace(x, basis.truncated(j)) for j in range(basis.k + 1)]
        self.assertTrue(np.all(np.diff(distances) <= 1e-12))

    def test_span_independent_of_order(self):
        img = gaussian_blob(6.5, 8.0, sigma=1.8)
        forward = build_tangent_subspace(img)
        backward = build_tangent_subspace(img, transforms=tuple(reversed(Transform.ALL)))
        X = np.random.default_rng(3).random((10, 256))
        np.testing.assert_allclose(subspace_distances(X, forward),
                                   subspace_distances(X, backward), atol=1e-9)

    def test_dimension_mismatch(self):
        basis = build_tangent_subspace(gaussian_blob())
        with self.assertRaises(DimensionMismatch):
            subspace_distances(np.zeros((2, 100)), basis)


class TestCorpus(unittest.TestCase):
    """Test corpus validation."""

    def test_valid(self):
        corpus = LabeledCorpus(np.zeros((3, 16, 16)), np.array([0, 4, 9]))
        self.assertEqual(len(corpus), 3)
        image, label = corpus.item(1)
        self.assertEqual(image.shape, GLYPH_SHAPE)
        self.assertEqual(label, 4)

    def test_invalid(self):
        with self.assertRaises(InvalidCorpus):
            LabeledCorpus(np.zeros((0, 256)), np.array([], dtype=int))
        with self.assertRaises(InvalidCorpus):
            LabeledCorpus(np.zeros((2, 256)), np.array([0, 10]))
        with self.assertRaises(InvalidCorpus):
            LabeledCorpus(np.zeros((2, 256)), np.array([0]))
        with self.assertRaises(InvalidCorpus):
            LabeledCorpus(np.full((1, 256), 1.5), np.array([0]))
        with self.assertRaises(InvalidCorpus):
            LabeledCorpus(np.zeros((1, 100)), np.array([0]))


class TestClassification(unittest.TestCase):
    """Test the classifiers against exhaustive scans."""

    @classmethod
    def setUpClass(cls):
        cls.train = gen_synthetic_glyphs(10, seed=31, stream="train")
        cls.test = gen_synthetic_glyphs(2, seed=31, stream="test")

    def test_tangent_matches_exhaustive_scan(self):
        rng = np.random.default_rng(5)
        for i in rng.choice(len(self.test), size=10, replace=False):
            image, _ = self.test.item(int(i))
            basis = build_tangent_subspace(image)
            scan = [distance_to_subspace(x, basis) for x in self.train.images]
            result = classify_tangent(image, self.train)
            self.assertEqual(result.index, int(np.argmin(scan)))
            self.assertAlmostEqual(result.distance, min(scan), places=10)

    def test_naive_agrees_with_fast(self):
        for i in range(0, len(self.test), 4):
            image, _ = self.test.item(i)
            fast = classify_tangent(image, self.train)
            naive = classify_tangent_naive(image, self.train)
            self.assertEqual(fast.index, naive.index)
            self.assertAlmostEqual(fast.distance, naive.distance, places=8)

    def test_tangent_distance_below_l2(self):
        image, _ = self.test.item(3)
        basis = build_tangent_subspace(image)
        tangent = subspace_distances(self.train.images, basis)
        l2 = np.linalg.norm(self.train.images - image.ravel(), axis=1)
        self.assertTrue(np.all(tangent <= l2 + 1e-12))

    def test_ties_go_to_lowest_index(self):
        img = gaussian_blob().ravel()
        corpus = LabeledCorpus(np.stack([np.zeros(256), img, img]), np.array([0, 3, 5]))
        result = classify_l2_baseline(img.reshape(GLYPH_SHAPE), corpus)
        self.assertEqual((result.label, result.index), (3, 1))
        self.assertEqual(classify_tangent(img, corpus).index, 1)

    def test_benchmark_rows(self):
        rows = run_benchmark(self.train, self.test, methods=("tangent", "l2"), timing=False)
        self.assertEqual([r.method for r in rows], ["tangent", "l2"])
        for row in rows:
            self.assertEqual(row.n_test, len(self.test))
            self.assertEqual(row.wall_ms, 0.0)
            self.assertAlmostEqual(row.error_rate, row.errors / row.n_test)
        self.assertEqual(BENCH_COLUMNS[0], "method")
        with self.assertRaises(InvalidConfig):
            run_benchmark(self.train, self.test, methods=("svm",))


@pytest.mark.parametrize("seed", range(100))
def test_distance_matches_lstsq_oracle(seed):
    rng = np.random.default_rng(seed)
    origin = rng.normal(size=8)
    directions = rng.normal(size=(3, 8))
    x = rng.normal(size=8)
    basis = TangentBasis.from_directions(origin, directions)
    d = distance_to_subspace(x, basis)
    assert d == pytest.approx(lstsq_distance(x, origin, directions), abs=1e-9)
    assert 0.0 <= d <= np.linalg.norm(x - origin) + 1e-12


def test_tangent_not_worse_than_l2_on_synthetic_glyphs():
    train = gen_synthetic_glyphs(30, seed=7, stream="train")
    test = gen_synthetic_glyphs(10, seed=7, stream="test")
    tangent, l2 = run_benchmark(train, test, timing=False)
    assert tangent.errors <= l2.errors


def test_fast_distances_beat_naive_loop():
    """Batched projection is at least five times faster than per-item solves."""
    train = gen_synthetic_glyphs(500, seed=1, stream="train")
    image, _ = gen_synthetic_glyphs(1, seed=1, stream="test").item(0)

    started = time.perf_counter()
    fast = classify_tangent(image, train)
    fast_s = time.perf_counter() - started

    started = time.perf_counter()
    naive = classify_tangent_naive(image, train)
    naive_s = time.perf_counter() - started

    assert fast.index == naive.index
    assert naive_s >= 5 * fast_s


if __name__ == '__main__':
    unittest.main()
