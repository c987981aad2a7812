"""
数値積分則のテスト
"""
import math
import unittest

import numpy as np

from visco_tumour.fem.quadrature import gauss_legendre_facet, quadrature_rule
from visco_tumour.utils.errors import FieldError


def _exact_monomial(a: int, b: int) -> float:
    """参照三角形上の ∫ x^a y^b"""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


class TestQuadrature(unittest.TestCase):
    """三角形・四面体の積分則のテスト"""

    def test_triangle_rules_are_exact(self):
        """要求次数までの単項式を厳密に積分する"""
        for degree in (1, 2, 3, 4, 5):
            rule = quadrature_rule(2, degree)
            self.assertGreaterEqual(rule.degree, degree)
            self.assertAlmostEqual(float(rule.weights.sum()), 1.0, places=12)
            x, y = rule.points[:, 1], rule.points[:, 2]
            for a in range(degree + 1):
                for b in range(degree + 1 - a):
                    approx = 0.5 * float(rule.weights @ (x ** a * y ** b))
                    self.assertAlmostEqual(approx, _exact_monomial(a, b), places=12, msg=f"x^{a} y^{b}")

    def test_barycentric_points(self):
        for degree in (1, 2, 4, 5):
            rule = quadrature_rule(2, degree)
            np.testing.assert_allclose(rule.points.sum(axis=1), 1.0, atol=1e-14)
            self.assertEqual(rule.num_points, rule.weights.shape[0])

    def test_tetrahedron_weights(self):
        for degree in (1, 2, 3):
            rule = quadrature_rule(3, degree)
            self.assertAlmostEqual(float(rule.weights.sum()), 1.0, places=12)

    def test_missing_rules(self):
        with self.assertRaises(FieldError):
            quadrature_rule(2, 6)
        with self.assertRaises(FieldError):
            quadrature_rule(4, 1)

    def test_facet_rule(self):
        """2点Gauss則は区間上の3次多項式を厳密に積分する"""
        nodes, weights = gauss_legendre_facet(2)
        self.assertAlmostEqual(float(weights.sum()), 1.0, places=14)
        self.assertAlmostEqual(float(weights @ nodes ** 3), 0.25, places=14)


if __name__ == "__main__":
    unittest.main()
