"""
Tests for tube weighting backends.
"""

import math
import os
import sys
import unittest

import numpy as np

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import UnknownWeighting
from core.weighting import (
    LineLengthWeighting, PixelGrid, StripAreaWeighting, WeightingScheme,
    available_weightings, get_weighting,
)


def bin_images(scheme, grid, theta, edges):
    """Dense weights per bin, each reshaped to the image."""
    b, k, w = scheme.angle_block(grid, theta, edges)
    out = np.zeros((edges.size - 1, grid.height * grid.width))
    np.add.at(out, (k, b), w)
    return out.reshape(edges.size - 1, grid.height, grid.width)


class TestPixelGrid(unittest.TestCase):
    """Test grid geometry."""

    def test_extent(self):
        grid = PixelGrid(4, 2, 0.5)
        self.assertEqual(grid.x_min, -1.0)
        self.assertEqual(grid.y_max, 0.5)
        self.assertAlmostEqual(grid.fov_radius, 0.25 * math.hypot(4, 2))

    def test_centers_orientation(self):
        """x grows with column, y decreases with row."""
        x, y = PixelGrid(2, 2, 1.0).centers()
        np.testing.assert_array_equal(x, [[-0.5, 0.5], [-0.5, 0.5]])
        np.testing.assert_array_equal(y, [[0.5, 0.5], [-0.5, -0.5]])


class TestLineLength(unittest.TestCase):
    """Test exact ray traversal."""

    def test_single_pixel_chord(self):
        """A central ray through one pixel has chord = pixel size."""
        grid = PixelGrid(1, 1, 2.0)
        b, w = LineLengthWeighting.ray_weights(grid, 0.0, 0.0)
        np.testing.assert_array_equal(b, [0])
        np.testing.assert_allclose(w, [2.0])

        b, w = LineLengthWeighting.ray_weights(grid, math.pi / 2, 0.3)
        np.testing.assert_array_equal(b, [0])
        np.testing.assert_allclose(w, [2.0])

    def test_diagonal_ray(self):
        """The 45 degree ray through a 2x2 grid crosses two pixels, each by sqrt(2)."""
        grid = PixelGrid(2, 2, 1.0)
        b, w = LineLengthWeighting.ray_weights(grid, math.pi / 4, 0.0)
        order = np.argsort(b)
        np.testing.assert_array_equal(b[order], [1, 2])
        np.testing.assert_allclose(w[order], [math.sqrt(2), math.sqrt(2)])

    def test_ray_missing_grid(self):
        b, w = LineLengthWeighting.ray_weights(PixelGrid(2, 2, 1.0), 0.0, 1.5)
        self.assertEqual(b.size, 0)
        self.assertEqual(w.size, 0)

    def test_horizontal_rows(self):
        """4x4 grid of 0.5 pixels, one angle, 8 bins: hit rows carry 4 chords of 0.5."""
        grid = PixelGrid(4, 4, 0.5)
        edges = np.linspace(-grid.fov_radius, grid.fov_radius, 9)
        images = bin_images(LineLengthWeighting(), grid, 0.0, edges)
        for k in range(8):
            nz = images[k][images[k] > 0]
            self.assertIn(nz.size, (0, 4))
            np.testing.assert_allclose(nz, 0.5)
            if nz.size:
                rows = np.flatnonzero(images[k].sum(axis=1))
                self.assertEqual(rows.size, 1)
        # the six inner bins hit the grid, the outer two miss it
        self.assertEqual(sum(int(np.any(images[k])) for k in range(8)), 6)

    def test_chord_sum_is_path_length(self):
        """A ray fully inside the grid accumulates the grid width along angle 0."""
        grid = PixelGrid(5, 3, 0.7)
        _, w = LineLengthWeighting.ray_weights(grid, 0.0, 0.1)
        self.assertAlmostEqual(w.sum(), 5 * 0.7, places=12)

    def test_quarter_turn_symmetry(self):
        """Rotating by pi/2 maps each bin's rows onto columns of a square grid."""
        grid = PixelGrid(4, 4, 1.0)
        edges = np.linspace(-grid.fov_radius, grid.fov_radius, 9)
        scheme = LineLengthWeighting()
        at_zero = bin_images(scheme, grid, 0.0, edges)
        at_quarter = bin_images(scheme, grid, math.pi / 2, edges)
        for k in range(8):
            np.testing.assert_allclose(at_quarter[k], at_zero[k].T, atol=1e-12)


class TestStripArea(unittest.TestCase):
    """Test supersampled strip weighting."""

    def test_pixel_area_conserved_per_angle(self):
        """Every pixel deposits s^2 / tube width over the bins of an angle."""
        grid = PixelGrid(3, 5, 0.5)
        edges = np.linspace(-grid.fov_radius, grid.fov_radius, 7)
        width = edges[1] - edges[0]
        for theta in (0.0, 0.4, 2.0):
            images = bin_images(StripAreaWeighting(), grid, theta, edges)
            np.testing.assert_allclose(images.sum(axis=0), 0.25 / width)

    def test_weights_nonnegative(self):
        grid = PixelGrid(4, 4, 1.0)
        edges = np.linspace(-grid.fov_radius, grid.fov_radius, 5)
        _, _, w = StripAreaWeighting().angle_block(grid, 1.0, edges)
        self.assertTrue(np.all(w > 0))


class TestRegistry(unittest.TestCase):
    """Test scheme lookup."""

    def test_get_weighting(self):
        self.assertIsInstance(get_weighting("line-length"), LineLengthWeighting)
        self.assertIsInstance(get_weighting("strip-area"), StripAreaWeighting)
        self.assertIsInstance(get_weighting("strip-area"), WeightingScheme)

    def test_unknown(self):
        with self.assertRaises(UnknownWeighting):
            get_weighting("fan-beam")

    def test_available(self):
        self.assertEqual(available_weightings(), ["line-length", "strip-area"])


if __name__ == '__main__':
    unittest.main()
