"""
行列関数と Λ 演算子のテスト
"""
import math
import unittest

import numpy as np

from visco_tumour.fem.mesh import affine_map, build_structured
from visco_tumour.fem.tensorcalc import (
    beta_delta,
    build_lambda,
    build_lambda_elements,
    chain_rule_residual,
    compose,
    eigh_symmetric,
    elastic_stress,
    f_delta,
    g_delta,
    gradient_log_gap,
    matrix_beta_delta,
    matrix_f_delta,
    matrix_g_delta,
    matrix_inverse,
    matrix_inverse_sqrt,
    matrix_log,
    min_eigenvalues,
    spectral_apply,
)
from visco_tumour.utils.errors import SPDViolationError, SpectralDomainError
from visco_tumour.verification import random_spd, random_symmetric


class TestSpectralFunctions(unittest.TestCase):
    """固有値分解とスペクトル関数のテスト"""

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_closed_form_eigendecomposition(self):
        matrices = random_symmetric(self.rng, 50, -2.0, 3.0)
        values, vectors = eigh_symmetric(matrices)
        np.testing.assert_allclose(values, np.linalg.eigvalsh(matrices), atol=1e-12)
        np.testing.assert_allclose(compose(values, vectors), matrices, atol=1e-12)
        self.assertTrue(np.all(values[:, 0] <= values[:, 1]))

    def test_diagonal_and_three_dimensional_input(self):
        values, _ = eigh_symmetric(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(values, [1.0, 2.0])
        values, _ = eigh_symmetric(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(values, [1.0, 2.0, 3.0])
        with self.assertRaises(ValueError):
            eigh_symmetric(np.eye(4))

    def test_log_and_inverse(self):
        B = random_spd(self.rng, 20)
        np.testing.assert_allclose(matrix_inverse(B) @ B, np.broadcast_to(np.eye(2), B.shape), atol=1e-11)
        np.testing.assert_allclose(matrix_log(np.diag([math.e, 1.0])), np.diag([1.0, 0.0]), atol=1e-14)
        with self.assertRaises(SPDViolationError):
            matrix_log(np.diag([-1.0, 2.0]))

    def test_undefined_function_reports_eigenvalue(self):
        with self.assertRaises(SpectralDomainError) as context:
            spectral_apply(np.diag([-1.0, 2.0])[None], np.log, "log")
        self.assertAlmostEqual(context.exception.eigenvalue, -1.0)

    def test_regularized_functions(self):
        """g_δ は δ で連続、f_δ′ = β_δ"""
        delta = 0.1
        self.assertAlmostEqual(float(g_delta(delta, delta)), math.log(delta), places=14)
        self.assertAlmostEqual(float(g_delta(delta - 1e-12, delta)), math.log(delta), places=10)
        s = np.linspace(-1.0, 2.0, 31)
        h = 1e-6
        derivative = (f_delta(s + h, delta) - f_delta(s - h, delta)) / (2.0 * h)
        np.testing.assert_allclose(derivative, beta_delta(s, delta), atol=1e-6)
        with self.assertRaises(ValueError):
            g_delta(1.0, 1.5)

    def test_matrix_g_delta_matches_log_above_delta(self):
        B = random_spd(self.rng, 10, 0.0, 1.0)
        np.testing.assert_allclose(matrix_g_delta(B, 0.5), matrix_log(B), atol=1e-12)

    def test_matrix_regularizations(self):
        """β_δ(B) は固有値を δ で切り上げ、f_δ(B) は δ 以上で ½B²"""
        np.testing.assert_allclose(matrix_beta_delta(np.diag([-1.0, 2.0]), 0.1), np.diag([0.1, 2.0]), atol=1e-14)
        B = random_spd(self.rng, 10, 0.0, 1.0)
        np.testing.assert_allclose(matrix_f_delta(B, 0.5), 0.5 * B @ B, atol=1e-12)
        symmetric = random_symmetric(self.rng, 10, -1.0, 2.0)
        product = matrix_beta_delta(symmetric, 0.1) @ matrix_inverse(matrix_beta_delta(symmetric, 0.1))
        np.testing.assert_allclose(product, np.broadcast_to(np.eye(2), product.shape), atol=1e-11)

    def test_inverse_square_root(self):
        B = random_spd(self.rng, 20)
        root = matrix_inverse_sqrt(B)
        np.testing.assert_allclose(root @ B @ root, np.broadcast_to(np.eye(2), B.shape), atol=1e-11)
        with self.assertRaises(SPDViolationError):
            matrix_inverse_sqrt(np.diag([0.0, 1.0]))

    def test_scalar_examples(self):
        self.assertAlmostEqual(float(g_delta(1.0, 0.3)), 0.0, places=15)
        self.assertAlmostEqual(float(g_delta(0.25, 0.5)), 0.5 + math.log(0.5) - 1.0, places=14)
        self.assertAlmostEqual(float(g_delta(0.25, 0.5)), -1.19315, places=5)
        self.assertEqual(float(beta_delta(0.5, 0.1)), 0.5)
        self.assertEqual(float(beta_delta(-3.0, 0.1)), 0.1)
        self.assertAlmostEqual(float(f_delta(0.05, 0.1)), 0.0, places=15)

    def test_log_is_rotation_invariant(self):
        np.testing.assert_allclose(matrix_log(np.diag([2.0, 0.5])), np.diag([math.log(2.0), -math.log(2.0)]), atol=1e-14)
        B = random_spd(self.rng, 100)
        angles = self.rng.uniform(0.0, 2.0 * math.pi, 100)
        c, s = np.cos(angles), np.sin(angles)
        R = np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)
        Rt = np.swapaxes(R, 1, 2)
        np.testing.assert_allclose(matrix_log(R @ B @ Rt), R @ matrix_log(B) @ Rt, atol=1e-11)

    def test_elastic_stress_vanishes_at_identity(self):
        identity = np.broadcast_to(np.eye(2), (4, 2, 2))
        np.testing.assert_allclose(elastic_stress(identity, 0.0), 0.0)
        np.testing.assert_allclose(elastic_stress(np.diag([2.0, 1.0])[None], 0.0)[0], np.diag([3.0, 0.0]))
        np.testing.assert_allclose(elastic_stress(identity, np.full(4, 2.0)), 2.0 * identity)
        np.testing.assert_allclose(min_eigenvalues(2.0 * identity), 2.0)


class TestLambda(unittest.TestCase):
    """Λ 演算子のテスト"""

    def setUp(self):
        self.rng = np.random.default_rng(5)
        self.mesh = build_structured((-0.3, 0.2), (1.7, 1.2), 3)

    def test_chain_rule_without_regularization(self):
        for element in range(self.mesh.num_elements):
            amap = affine_map(self.mesh, element)
            B = random_spd(self.rng, 3)
            lam = build_lambda(B, amap)
            self.assertLessEqual(chain_rule_residual(B, amap, element_lambda=lam, relative=True), 1e-10)
            self.assertTrue(np.all((lam.raw_lambdas >= -1e-10) & (lam.raw_lambdas <= 1.0 + 1e-10)))
            np.testing.assert_array_equal(lam.bound_excess <= 1e-10, True)

    def test_chain_rule_with_regularization(self):
        for delta in (0.5, 0.1, 0.01):
            for element in (0, 7, 17):
                amap = affine_map(self.mesh, element)
                B = random_symmetric(self.rng, 3, -0.5, 3.0)
                self.assertLessEqual(chain_rule_residual(B, amap, delta, relative=True), 1e-10)
                lam = build_lambda(B, amap, delta)
                self.assertLessEqual(float(lam.bound_excess.max()), 1e-10)

    def test_degenerate_element(self):
        """頂点値が等しい要素では Λ_ij = δ_ij B"""
        B = random_spd(self.rng, 1)[0]
        corners = np.broadcast_to(B, (self.mesh.num_elements, 3, 2, 2))
        lam = build_lambda_elements(corners, self.mesh.inverse_transposes)
        self.assertTrue(np.all(lam.degenerate))
        np.testing.assert_array_equal(lam.lambdas, 0.0)
        expected = np.einsum("ij,ab->ijab", np.eye(2), B)
        np.testing.assert_allclose(lam.full, np.broadcast_to(expected, lam.full.shape), atol=1e-12)

    def test_non_spd_vertex_rejected(self):
        B = random_spd(self.rng, 3)
        B[1] = -B[1]
        with self.assertRaises(SPDViolationError):
            build_lambda(B, affine_map(self.mesh, 0))

    def test_gradient_log_inequality(self):
        """非鈍角メッシュでは要素ごとの余裕が非負"""
        for delta in (None, 0.1):
            B = random_spd(self.rng, self.mesh.num_vertices)
            gap = gradient_log_gap(B[self.mesh.simplices], self.mesh.basis_gradients, self.mesh.volumes, delta)
            self.assertGreaterEqual(float(np.min(gap / np.maximum(1.0, np.abs(gap)))), -1e-11)

    def test_perturbed_lambda_breaks_the_chain_rule(self):
        amap = affine_map(self.mesh, 4)
        B = random_spd(self.rng, 3, -1.5, 1.5)
        lam = build_lambda(B, amap)
        exact = chain_rule_residual(B, amap, element_lambda=lam)
        shifted = chain_rule_residual(B, amap, element_lambda=lam.perturbed(0.25))
        self.assertGreater(shifted, 1e3 * max(exact, 1e-16))


if __name__ == "__main__":
    unittest.main()
