"""Tests methods in geodesics module"""

import unittest

import numpy as np

from snowprobe.errors import (
    DomainError,
    InputError,
    OracleViolationError,
    ResourceLimitError,
)
from snowprobe.example_spaces import euclidean, mixed_product, snowflaked
from snowprobe.geodesics import (
    BetweenOracle,
    adjacent_additivity_defect,
    build_schedule,
    construct_geodesic,
    isometry_defect,
    linear_between_oracle,
    running_defect,
)
from snowprobe.oracles import SegmentOracle


class PerturbedSegmentOracle(SegmentOracle):
    """Places points 1% further along the segment than asked."""

    def place(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Straight-line interpolation at 1.01 t."""
        return xs + 1.01 * self.t * (ys - xs)


def perturbed_oracle(delta: float) -> BetweenOracle:
    """A between oracle whose distance equations are off by 1%."""
    placement = PerturbedSegmentOracle(
        descriptor=euclidean(2),
        ratios=(delta, 1 - delta),
        t=delta,
        check_tol=0.1,
    )
    return BetweenOracle(delta=delta, placement=placement)


class TestSchedule(unittest.TestCase):
    """Tests build_schedule"""

    def test_examples(self):
        """Tests the first subdivisions"""
        self.assertEqual(
            [0.0, 0.25, 0.5, 0.75, 1.0], build_schedule(0.5, 2).endpoints
        )
        np.testing.assert_allclose(
            [0.0, 1 / 3, 1.0], build_schedule(1 / 3, 1).endpoints
        )
        np.testing.assert_allclose(
            [0.0, 1 / 9, 1 / 3, 5 / 9, 1.0],
            build_schedule(1 / 3, 2).endpoints,
        )
        self.assertEqual([0.0, 1.0], build_schedule(0.3, 0).endpoints)

    def test_nested(self):
        """Tests that E_k is every 2**(n - k)-th endpoint of E_n"""
        deep = build_schedule(0.3, 6).endpoints
        shallow = build_schedule(0.3, 4).endpoints
        self.assertEqual(shallow, deep[::4])
        self.assertEqual(65, len(deep))

    def test_errors(self):
        """Tests parameter validation"""
        with self.assertRaises(DomainError):
            build_schedule(0.0, 2)
        with self.assertRaises(InputError):
            build_schedule(0.5, -1)
        with self.assertRaises(ResourceLimitError):
            build_schedule(0.5, 21)


class TestConstructGeodesic(unittest.TestCase):
    """Tests construct_geodesic and its checks"""

    def test_euclidean_plane(self):
        """Tests the straight line at delta = 1/3"""
        desc = euclidean(2)
        oracle = linear_between_oracle(desc, 1 / 3)
        g = construct_geodesic(oracle, [0.0, 0.0], [1.0, 2.0], 1 / 3, 8)
        self.assertEqual(257, len(g.points))
        t = np.asarray(g.schedule.endpoints)
        np.testing.assert_allclose(
            np.stack([t, 2 * t], axis=1), g.points, atol=1e-12
        )
        deviation = isometry_defect(g)
        self.assertLessEqual(deviation.max_defect, 1e-12)
        self.assertLessEqual(adjacent_additivity_defect(g), 1e-12)
        np.testing.assert_array_equal([0.0, 0.0], g.x)
        np.testing.assert_array_equal([1.0, 2.0], g.y)

    def test_mixed_product_axis(self):
        """Tests an exact geodesic along the Euclidean axis"""
        desc = mixed_product([1, 0.5])
        oracle = linear_between_oracle(desc, 0.5)
        g = construct_geodesic(oracle, [0.0, 0.3], [1.0, 0.3], 0.5, 8)
        self.assertLessEqual(isometry_defect(g).max_defect, 1e-12)

    def test_snowflake_violation(self):
        """Tests that the naive oracle is rejected on a snowflake"""
        desc = snowflaked(euclidean(2), 0.5)
        oracle = linear_between_oracle(desc, 1 / 3)
        with self.assertRaises(OracleViolationError) as e:
            construct_geodesic(oracle, [0.0, 0.0], [1.0, 0.0], 1 / 3, 3)
        self.assertEqual((1, (0.0, 1.0)), e.exception.step)
        self.assertGreater(e.exception.residual, 0.1)

    def test_perturbed_oracle(self):
        """Tests that a 1% oracle error shows in the isometry defect"""
        oracle = perturbed_oracle(1 / 3)
        g = construct_geodesic(oracle, [0.0, 0.0], [3.0, 4.0], 1 / 3, 5)
        self.assertGreaterEqual(isometry_defect(g).max_defect, 0.001)
        self.assertLessEqual(adjacent_additivity_defect(g), 1e-12)

    def test_single_interval(self):
        """Tests that depth 1 measures the oracle's own residual"""
        oracle = perturbed_oracle(1 / 3)
        x, y = np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]])
        g = construct_geodesic(oracle, x[0], y[0], 1 / 3, 1)
        z = oracle.placement.place(x, y)
        residual = oracle.placement.residuals(x, y, z)[0]
        self.assertAlmostEqual(
            residual, isometry_defect(g).max_defect, places=12
        )
        self.assertAlmostEqual(0.01 / 3, residual, places=12)

    def test_at_depth_and_running(self):
        """Tests restriction to shallower schedules and running defects"""
        oracle = perturbed_oracle(0.4)
        g = construct_geodesic(oracle, [0.0, 0.0], [1.0, 1.0], 0.4, 6)
        shallow = g.at_depth(3)
        self.assertEqual(3, shallow.schedule.depth)
        np.testing.assert_allclose(
            build_schedule(0.4, 3).endpoints, shallow.schedule.endpoints
        )
        np.testing.assert_array_equal(g.points[::8], shallow.points)
        rows = running_defect(g)
        self.assertEqual(65, len(rows))
        running = [row[2] for row in rows]
        self.assertEqual(sorted(running), running)
        self.assertAlmostEqual(
            isometry_defect(g).max_defect, running[-1], places=14
        )
        self.assertEqual(0.0, rows[0][0])
        self.assertEqual([1.0, 1.0], rows[-1][1])
        with self.assertRaises(InputError):
            g.at_depth(7)

    def test_separate_builds_are_nested(self):
        """Tests that a build at depth n + 1 extends the one at depth n"""
        oracle = perturbed_oracle(0.4)
        for n in [0, 3, 5]:
            with self.subTest(n=n):
                g = construct_geodesic(
                    oracle, [0.0, 0.0], [1.0, 2.0], 0.4, n
                )
                deeper = construct_geodesic(
                    oracle, [0.0, 0.0], [1.0, 2.0], 0.4, n + 1
                )
                np.testing.assert_array_equal(g.points, deeper.points[::2])
                self.assertEqual(
                    g.schedule.endpoints, deeper.schedule.endpoints[::2]
                )

    def test_exhaustive_limit(self):
        """Tests that deep schedules must be restricted first"""
        oracle = linear_between_oracle(euclidean(1), 0.5)
        g = construct_geodesic(oracle, [0.0], [1.0], 0.5, 13)
        with self.assertRaises(ResourceLimitError):
            isometry_defect(g)
        self.assertLessEqual(isometry_defect(g.at_depth(6)).max_defect, 1e-12)

    def test_argument_errors(self):
        """Tests endpoint and delta validation"""
        oracle = linear_between_oracle(euclidean(2), 0.5)
        with self.assertRaises(InputError):
            construct_geodesic(oracle, [1.0, 1.0], [1.0, 1.0], 0.5, 2)
        with self.assertRaises(DomainError):
            construct_geodesic(oracle, [0.0, 0.0], [1.0, 1.0], 0.25, 2)
        with self.assertRaises(ValueError):
            BetweenOracle(delta=0.25, placement=oracle.placement)


if __name__ == "__main__":
    unittest.main()
