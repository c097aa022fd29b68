"""Tests methods in dimension module"""

import math
import unittest

import numpy as np

from snowprobe.dimension import (
    DimensionEstimate,
    auto_radii,
    box_dimension,
    default_scales,
    dimension_bound_holds,
    doubling_constant,
    resolution,
    sphere_surjectivity,
)
from snowprobe.errors import InputError
from snowprobe.example_spaces import (
    euclidean,
    materialize,
    sample,
    shift_space,
    snowflaked,
)
from snowprobe.exponents import desnowflake_exponent
from snowprobe.metric_core import FiniteMetricSpace, power_transform


def line_space(coords) -> FiniteMetricSpace:
    """Points on a line with |s - t|."""
    t = np.asarray(coords, dtype=float)
    return FiniteMetricSpace.from_matrix(np.abs(t[:, None] - t[None, :]))


class TestBoxDimension(unittest.TestCase):
    """Tests box_dimension"""

    @classmethod
    def setUpClass(cls) -> None:
        """Build a dense segment and its 1/2 snowflake."""
        cls.segment = line_space(np.linspace(0.0, 1.0, 1000))
        cls.snowflake = power_transform(cls.segment, 0.5)

    def test_segment(self):
        """Tests that a segment has dimension 1"""
        scales = [2.0**-k for k in range(2, 8)]
        estimate = box_dimension(self.segment, scales)
        self.assertAlmostEqual(1.0, estimate.slope, delta=0.15)
        self.assertEqual(sorted(scales), [r.scale for r in estimate.records])
        counts = [r.count for r in estimate.records]
        self.assertEqual(sorted(counts, reverse=True), counts)

    def test_snowflake(self):
        """Tests that the 1/2 snowflake of a segment has dimension 2"""
        scales = np.geomspace(0.05, 0.5, 8)
        estimate = box_dimension(self.snowflake, scales)
        self.assertAlmostEqual(2.0, estimate.slope, delta=0.3)

    def test_single_point(self):
        """Tests that one point has dimension 0"""
        estimate = box_dimension(line_space([0.0]), [0.1, 0.5, 1.0])
        self.assertEqual([1, 1, 1], [r.count for r in estimate.records])
        self.assertAlmostEqual(0.0, estimate.slope)
        self.assertAlmostEqual(0.0, estimate.residual)

    def test_default_scales(self):
        """Tests the default scale range and its use"""
        scales = default_scales(self.segment)
        self.assertEqual(8, len(scales))
        self.assertAlmostEqual(1 / 64, scales[0])
        self.assertAlmostEqual(1 / 4, scales[-1])
        threaded = box_dimension(self.segment, threads=3)
        self.assertEqual(box_dimension(self.segment), threaded)
        with self.assertRaises(InputError):
            default_scales(line_space([0.0]))

    def test_resolution(self):
        """Tests the largest nearest-neighbour distance"""
        self.assertEqual(0.5, resolution(line_space([0.0, 0.1, 0.5, 1.0])))
        self.assertEqual(0.0, resolution(line_space([0.0])))

    def test_default_window_follows_resolution(self):
        """Tests that sparse samples get a window above their
        resolution"""
        desc = snowflaked(euclidean(2), 0.5)
        space = materialize(sample(desc, 200, seed=0))
        scales = default_scales(space)
        self.assertEqual(8, len(scales))
        self.assertGreaterEqual(
            scales[0], min(resolution(space), space.diameter() / 4)
        )
        self.assertLessEqual(scales[-1], space.diameter() / 2 + 1e-12)
        estimate = box_dimension(space)
        self.assertEqual(scales, [r.scale for r in estimate.records])
        self.assertLess(estimate.records[0].count, space.n)

    def test_bound_on_samples(self):
        """Tests p* <= D on sampled planes and snowflaked planes"""
        for desc in [euclidean(2), snowflaked(euclidean(2), 0.5)]:
            with self.subTest(space=desc.to_spec()):
                space = materialize(sample(desc, 200, seed=0))
                p_star = desnowflake_exponent(space).p_star
                estimate = box_dimension(space)
                self.assertTrue(dimension_bound_holds(p_star, estimate))

    def test_bad_scales(self):
        """Tests scale validation"""
        with self.assertRaises(InputError):
            box_dimension(self.segment, [0.1, 0.5])
        with self.assertRaises(InputError):
            box_dimension(self.segment, [0.1, 0.2, 0.5])
        with self.assertRaises(InputError):
            box_dimension(self.segment, [0.0, 0.1, 0.5])
        with self.assertRaises(InputError):
            box_dimension(self.segment, [0.01, 0.01, 0.5])


class TestDoublingConstant(unittest.TestCase):
    """Tests doubling_constant"""

    def test_segment(self):
        """Tests that segment balls need at most 3 half balls"""
        space = line_space(np.linspace(0.0, 1.0, 101))
        estimate = doubling_constant(space, [0.1, 0.2])
        self.assertLessEqual(estimate.c_hat, 3)
        self.assertGreaterEqual(estimate.c_hat, 2)
        self.assertEqual(64, estimate.centers_tested)
        center, radius = estimate.worst
        self.assertIn(radius, [0.1, 0.2])
        self.assertTrue(0 <= center < 101)

    def test_plane(self):
        """Tests that plane balls need a bounded number of half balls"""
        space = materialize(sample(euclidean(2), 200, seed=0))
        estimate = doubling_constant(space, [0.1, 0.2], center_budget=32)
        self.assertLessEqual(estimate.c_hat, 16)
        self.assertGreaterEqual(estimate.c_hat, 2)
        again = doubling_constant(space, [0.1, 0.2], center_budget=32)
        self.assertEqual(estimate, again)

    def test_two_points(self):
        """Tests the 2-point space on both sides of r = 2 d"""
        space = line_space([0.0, 1.0])
        self.assertEqual(1, doubling_constant(space, [2.5]).c_hat)
        self.assertEqual(2, doubling_constant(space, [1.5]).c_hat)
        self.assertEqual(2, doubling_constant(space, [1.5]).centers_tested)

    def test_bad_radii(self):
        """Tests radius validation"""
        space = line_space([0.0, 1.0])
        with self.assertRaises(InputError):
            doubling_constant(space, [])
        with self.assertRaises(InputError):
            doubling_constant(space, [0.0])


class TestSpheres(unittest.TestCase):
    """Tests sphere_surjectivity and dimension_bound_holds"""

    def test_segment_is_surjective(self):
        """Tests that distances from an end fill [0, 1]"""
        space = line_space(np.linspace(0.0, 1.0, 201))
        radii = auto_radii(space, 0, 64)
        self.assertEqual(0.0, radii[0])
        self.assertEqual(1.0, radii[-1])
        result = sphere_surjectivity(space, 0, radii, gap_tol=0.005)
        self.assertTrue(result.surjective)
        self.assertEqual(64, len(result.rows))
        self.assertEqual(0, result.center)

    def test_shift_space_has_gaps(self):
        """Tests that shift space distances miss most radii"""
        space = materialize(sample(shift_space(3), 40, seed=0))
        radii = auto_radii(space, 0, 16)
        result = sphere_surjectivity(space, 0, radii, gap_tol=0.05)
        self.assertFalse(result.surjective)
        gaps = [gap for _, gap in result.rows]
        self.assertEqual(0.0, gaps[0])
        self.assertEqual(0.0, gaps[-1])

    def test_radius_errors(self):
        """Tests radius validation"""
        space = line_space([0.0, 1.0, 2.0])
        with self.assertRaises(InputError):
            sphere_surjectivity(space, 0, [3.0], gap_tol=0.1)
        with self.assertRaises(InputError):
            auto_radii(space, 0, 0)
        self.assertEqual([0.0], auto_radii(space, 0, 1))

    def test_dimension_bound(self):
        """Tests p* against the fitted dimension"""
        estimate = DimensionEstimate(slope=1.9, residual=0.15, records=[])
        self.assertTrue(dimension_bound_holds(2.0, estimate))
        self.assertFalse(dimension_bound_holds(2.5, estimate))
        self.assertFalse(dimension_bound_holds(math.inf, estimate))


if __name__ == "__main__":
    unittest.main()
