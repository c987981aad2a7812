"""
時間発展ソルバーのテスト

一様な宿主組織の不動点、1ステップの恒等式の残差、再メッシュでの状態の移し替えを確認します。
"""
import unittest

import numpy as np

from visco_tumour.diagnostics import discrete_energy
from visco_tumour.fem.fespace import MatrixField, interpolate_nodal
from visco_tumour.fem.mesh import BoundarySegment, build_structured, refine_near_interface
from visco_tumour.model import InitialData, ModelParams, supply_sampler, tumour_initial_data
from visco_tumour.solver.engine import (
    MeshPolicy,
    TimeStepper,
    build_initial_mesh,
    initial_state,
    run,
    step_count,
    transfer_state,
)
from visco_tumour.solver.operators import SchemeOperators
from visco_tumour.solver.substeps import require_spd_vertices
from visco_tumour.utils.errors import ConfigurationError, SPDViolationError


def _identity(points):
    return np.broadcast_to(np.eye(2), (len(points), 2, 2)).copy()


def host_data() -> InitialData:
    """腫瘍のない一様な宿主組織"""
    return InitialData(
        phi0=lambda points: -np.ones(len(points)),
        B0=_identity,
        sigma_inf=lambda points, time=0.0: np.ones(len(points)),
    )


SMALL_POLICY = MeshPolicy(lower=(-2.0, -2.0), upper=(2.0, 2.0), n_coarse=4, dirichlet=(BoundarySegment("xmin"),))


class TestHomogeneousHost(unittest.TestCase):
    """一様状態は時間発展で変わらない"""

    def setUp(self):
        self.params = ModelParams(chi_phi=0.0, T_end=0.01)
        mesh = build_structured(SMALL_POLICY.lower, SMALL_POLICY.upper, SMALL_POLICY.n_coarse, SMALL_POLICY.dirichlet)
        self.ops = SchemeOperators(mesh, self.params)

    def test_single_step_is_a_fixed_point(self):
        data = host_data()
        state = initial_state(self.ops, data)
        sampler = supply_sampler(self.ops.scalar, data, self.params)
        new = TimeStepper(self.ops).time_step(state, sampler(1))
        self.assertEqual(new.n, 1)
        self.assertAlmostEqual(new.time, 0.005)
        self.assertLessEqual(new.nonlinear_iters, 2)
        np.testing.assert_allclose(new.phi.values, -1.0, atol=1e-10)
        np.testing.assert_allclose(new.v.values, 0.0, atol=1e-10)
        np.testing.assert_allclose(new.B.values[:, :2], 1.0, atol=1e-10)
        np.testing.assert_allclose(new.B.values[:, 2], 0.0, atol=1e-10)
        # 消費がなければ σ は境界値1に一致する
        np.testing.assert_allclose(new.sigma.values, 1.0, atol=1e-8)

    def test_run_keeps_the_energy(self):
        result = run(self.params, host_data(), SMALL_POLICY)
        self.assertEqual(result.steps, 2)
        self.assertEqual(len(result.diagnostics), 2)
        self.assertAlmostEqual(result.initial_energy, 8.0, places=9)
        for row in result.diagnostics:
            self.assertAlmostEqual(row.energy, 8.0, places=8)
            self.assertAlmostEqual(row.tumour_volume, 0.0, places=9)
            self.assertAlmostEqual(row.spd_margin, 1.0, places=8)
        summary = result.summary()
        self.assertEqual(summary["steps"], 2)
        self.assertEqual(summary["remesh_count"], 0)

    def test_callbacks_and_step_limit(self):
        seen = []
        initial = []
        result = run(
            self.params,
            host_data(),
            SMALL_POLICY,
            callbacks=[lambda state, row: seen.append((state.n, row.time))],
            max_steps=1,
            on_initial=lambda state: initial.append(state.n),
        )
        self.assertEqual(result.steps, 1)
        self.assertEqual(initial, [0])
        self.assertEqual(seen, [(1, 0.005)])

    def test_final_time_must_be_a_multiple_of_the_step(self):
        with self.assertRaises(ConfigurationError):
            step_count(ModelParams(T_end=0.0123))
        self.assertEqual(step_count(ModelParams(T_end=0.5)), 100)


class TestTumourStep(unittest.TestCase):
    """滑らかな界面を持つ腫瘍の1ステップ"""

    @classmethod
    def setUpClass(cls):
        cls.params = ModelParams(eps=0.5, T_end=0.01, max_nonlinear_iters=60)
        cls.policy = MeshPolicy(lower=(-3.0, -3.0), upper=(3.0, 3.0), n_coarse=8)
        cls.result = run(cls.params, tumour_initial_data(cls.params.eps), cls.policy)

    def test_identities_hold(self):
        for row in self.result.diagnostics:
            self.assertLess(row.res_cons, 1e-5)
            self.assertLess(row.res_div, 1e-6)
            self.assertLess(row.res_mu, 1e-5)
            self.assertGreater(row.spd_margin, 0.0)
            self.assertGreaterEqual(row.iters, 1)

    def test_state_is_consistent(self):
        state = self.result.state
        self.assertEqual(state.n, 2)
        self.assertEqual(len(state.residual_log), state.nonlinear_iters)
        self.assertLess(state.residual_log[-1], self.params.tol_nonlinear)
        require_spd_vertices(state.B, "final B")

    def _first_step(self, tol: float):
        params = self.params.model_copy(update={"tol_nonlinear": tol})
        mesh = build_structured(self.policy.lower, self.policy.upper, self.policy.n_coarse, self.policy.dirichlet)
        ops = SchemeOperators(mesh, params)
        data = tumour_initial_data(params.eps)
        state = initial_state(ops, data)
        return TimeStepper(ops).time_step(state, supply_sampler(ops.scalar, data, params)(1))

    def test_halving_the_tolerance_adds_at_most_two_iterations(self):
        tol = self.params.tol_nonlinear
        coarse = self._first_step(tol)
        fine = self._first_step(0.5 * tol)
        self.assertGreaterEqual(fine.nonlinear_iters, coarse.nonlinear_iters)
        self.assertLessEqual(fine.nonlinear_iters, coarse.nonlinear_iters + 2)
        self.assertLess(fine.residual_log[-1], 0.5 * tol)
        np.testing.assert_allclose(fine.phi.values, coarse.phi.values, atol=10.0 * tol)

    def test_run_is_deterministic(self):
        again = run(self.params, tumour_initial_data(self.params.eps), self.policy)
        np.testing.assert_array_equal(again.state.phi.values, self.result.state.phi.values)
        np.testing.assert_array_equal(again.state.B.values, self.result.state.B.values)
        self.assertEqual(again.frame().to_dict(), self.result.frame().to_dict())


class TestRemeshTransfer(unittest.TestCase):
    """再メッシュでの状態の移し替え"""

    def test_transfer_to_refined_mesh(self):
        params = ModelParams(eps=0.3)
        data = tumour_initial_data(params.eps)
        base = build_structured((-2.0, -2.0), (2.0, 2.0), 8, (BoundarySegment("xmin"),))
        ops = SchemeOperators(base, params)
        state = initial_state(ops, data)
        refined = refine_near_interface(base, state.phi.values, 0.2, 0.5)
        new_ops = SchemeOperators(refined, params)
        moved = transfer_state(state, new_ops)
        self.assertIs(moved.mesh, refined)
        self.assertEqual(moved.n, state.n)
        np.testing.assert_allclose(moved.B.values[:, :2], 1.0)
        self.assertLessEqual(float(np.max(np.abs(moved.phi.values))), 1.0 + 1e-12)
        np.testing.assert_allclose(moved.v.values, 0.0)

    def test_negative_tensor_is_rejected(self):
        params = ModelParams(eps=0.3)
        data = tumour_initial_data(params.eps)
        base = build_structured((-2.0, -2.0), (2.0, 2.0), 4, (BoundarySegment("xmin"),))
        ops = SchemeOperators(base, params)
        state = initial_state(ops, data)
        broken = MatrixField(ops.matrix, -state.B.values)
        with self.assertRaises(SPDViolationError):
            require_spd_vertices(broken, "broken")

    def test_adaptive_initial_mesh(self):
        """細い界面の近くだけが細分化され、角の付近は基礎格子のまま残る"""
        params = ModelParams(eps=0.05)
        policy = MeshPolicy(lower=(-2.0, -2.0), upper=(2.0, 2.0), n_coarse=8, target_h=0.2)
        mesh = build_initial_mesh(policy, tumour_initial_data(params.eps), params)
        self.assertLessEqual(float(mesh.element_diameters.min()), 0.2 * (1.0 + 1e-9))
        self.assertGreater(float(mesh.element_diameters.max()), 0.5)
        self.assertIn(0, set(mesh.level.tolist()))
        self.assertGreater(mesh.num_elements, 2 * 8 * 8)

    def test_energy_of_interpolated_state(self):
        params = ModelParams(eps=0.3)
        base = build_structured((-2.0, -2.0), (2.0, 2.0), 4, (BoundarySegment("xmin"),))
        ops = SchemeOperators(base, params)
        state = initial_state(ops, host_data())
        phi = interpolate_nodal(ops.scalar, lambda points: -np.ones(len(points)))
        np.testing.assert_array_equal(state.phi.values, phi.values)
        self.assertAlmostEqual(discrete_energy(state, params), 8.0, places=10)


if __name__ == "__main__":
    unittest.main()
