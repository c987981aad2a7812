"""
診断量のテスト

離散エネルギー、正定値性の余裕、腫瘍体積と診断行の表を確認します。
"""
from dataclasses import replace
import math
import unittest

import numpy as np

from visco_tumour.diagnostics import (
    CSV_COLUMNS,
    StepDiagnostics,
    diagnostics_frame,
    discrete_energy,
    general_energy,
    phi_overshoot,
    sigma_h1_norm,
    sigma_stability_ratio,
    spd_margin,
    tumour_volume,
)
from visco_tumour.fem.fespace import MatrixField, ScalarField, interpolate_nodal
from visco_tumour.fem.mesh import BoundarySegment, build_structured
from visco_tumour.model import InitialData, ModelParams
from visco_tumour.solver.engine import initial_state
from visco_tumour.solver.operators import SchemeOperators
from visco_tumour.utils.errors import FieldError, SPDViolationError


def _constant_data(phi: float) -> InitialData:
    return InitialData(
        phi0=lambda points: np.full(len(points), phi),
        B0=lambda points: np.broadcast_to(np.eye(2), (len(points), 2, 2)).copy(),
        sigma_inf=lambda points, time=0.0: np.ones(len(points)),
    )


def _row(time: float, **values) -> StepDiagnostics:
    defaults = dict(
        energy=1.0, tumour_volume=2.0, spd_margin=0.5, iters=3,
        res_cons=0.0, res_div=0.0, res_mu=0.0, sigma_h1=1.0,
    )
    defaults.update(values)
    return StepDiagnostics(time=time, **defaults)


class TestEnergy(unittest.TestCase):
    """離散エネルギーのテスト"""

    def setUp(self):
        self.mesh = build_structured((-5.0, -5.0), (5.0, 5.0), 4, (BoundarySegment("xmin"),))

    def _state(self, params: ModelParams, phi: float):
        return initial_state(SchemeOperators(self.mesh, params), _constant_data(phi))

    def test_host_energy(self):
        """φ = −1, B = I では ¼|I|²|Ω| = 50"""
        params = ModelParams()
        state = self._state(params, -1.0)
        self.assertAlmostEqual(discrete_energy(state, params), 50.0, places=10)
        self.assertAlmostEqual(general_energy(state, params), 50.0, places=10)

    def test_tumour_energy_with_stress_coupling(self):
        """φ = 1, κ_t = 1.25 では (½ + ½κ_t·2)|Ω| = 175"""
        params = ModelParams(kappa_t=1.25)
        state = self._state(params, 1.0)
        self.assertAlmostEqual(discrete_energy(state, params), 175.0, places=10)

    def test_interface_energy_is_positive(self):
        params = ModelParams()
        state = self._state(params, 0.0)
        # ψ(0) = ¼ なので (β/ε)·¼·|Ω| が加わる
        expected = 50.0 + (params.beta / params.eps) * 0.25 * 100.0
        self.assertAlmostEqual(discrete_energy(state, params), expected, places=9)

    def test_non_spd_tensor(self):
        params = ModelParams()
        state = self._state(params, -1.0)
        values = state.B.values.copy()
        values[0, :2] = -1.0
        broken = replace(state, B=MatrixField(state.B.space, values))
        with self.assertRaises(SPDViolationError):
            discrete_energy(broken, params)
        self.assertTrue(math.isfinite(general_energy(broken, params)))
        self.assertAlmostEqual(spd_margin(broken.B), -1.0, places=12)

    def test_general_energy_with_variable_kappa(self):
        """κ(φ) は頂点ごとに評価され、δ 未満の固有値では ln の代わりに g_δ を使う"""
        params = ModelParams(kappa_t=0.5)
        ops = SchemeOperators(self.mesh, params)
        state = initial_state(ops, _constant_data(-1.0))
        phi = interpolate_nodal(ops.scalar, lambda points: np.tanh(points[:, 0]))
        values = state.B.values.copy()
        values[5, :2] = (5e-4, 1.0)
        state = replace(state, phi=phi, B=MatrixField(state.B.space, values))

        coupling = 0.5 * float(ops.weights @ (0.25 * (1.0 + phi.values) * values[:, :2].sum(axis=1)))
        without = ModelParams()
        self.assertAlmostEqual(
            general_energy(state, params) - general_energy(state, without), coupling, places=10
        )
        # ½w(ln(δ/2) − g_δ(δ/2)) = ½w(½ − ln 2)
        gap = 0.5 * ops.weights[5] * (0.5 - math.log(2.0))
        self.assertAlmostEqual(general_energy(state, params) - discrete_energy(state, params), gap, places=10)
        self.assertAlmostEqual(
            discrete_energy(state, params, ops.stiffness), discrete_energy(state, params), places=12
        )


class TestPointwiseDiagnostics(unittest.TestCase):
    """体積・余裕・ノルムのテスト"""

    def setUp(self):
        self.ops = SchemeOperators(build_structured((0.0, 0.0), (2.0, 2.0), 4, (BoundarySegment("xmin"),)), ModelParams())

    def test_tumour_volume(self):
        ones = ScalarField(self.ops.scalar, np.ones(self.ops.scalar.dim))
        self.assertAlmostEqual(tumour_volume(ones), 4.0, places=12)
        self.assertAlmostEqual(tumour_volume(ScalarField(self.ops.scalar, -ones.values)), 0.0, places=12)

    def test_spd_margin(self):
        B = interpolate_nodal(
            self.ops.matrix, lambda points: np.broadcast_to(np.diag([2.0, 0.5]), (len(points), 2, 2))
        )
        self.assertAlmostEqual(spd_margin(B), 0.5, places=14)

    def test_overshoot(self):
        phi = ScalarField(self.ops.scalar, np.linspace(-1.0, 1.2, self.ops.scalar.dim))
        self.assertAlmostEqual(phi_overshoot(phi), 0.2, places=12)
        self.assertEqual(phi_overshoot(ScalarField(self.ops.scalar, np.zeros(self.ops.scalar.dim))), 0.0)

    def test_sigma_norm(self):
        """定数1の H¹ ノルムは √|Ω|"""
        sigma = ScalarField(self.ops.scalar, np.ones(self.ops.scalar.dim))
        self.assertAlmostEqual(sigma_h1_norm(sigma), 2.0, places=12)
        self.assertAlmostEqual(sigma_h1_norm(sigma, self.ops.h1), 2.0, places=12)


class TestDiagnosticsTable(unittest.TestCase):
    """診断行と表のテスト"""

    def test_row_rejects_non_finite_values(self):
        with self.assertRaises(FieldError):
            _row(0.1, energy=float("nan"))

    def test_csv_row_order(self):
        row = _row(0.25)
        self.assertEqual(row.csv_row(), (0.25, 1.0, 2.0, 0.5, 3, 0.0, 0.0, 0.0, 1.0))

    def test_frame(self):
        frame = diagnostics_frame([_row(0.1, supply_l2=2.0), _row(0.2, sigma_h1=3.0, supply_l2=2.0)])
        self.assertEqual(list(frame.columns[: len(CSV_COLUMNS)]), list(CSV_COLUMNS))
        self.assertEqual(str(frame["iters"].dtype), "int64")
        self.assertAlmostEqual(sigma_stability_ratio(frame), 1.5)

    def test_stability_ratio_without_supply(self):
        self.assertTrue(math.isnan(sigma_stability_ratio(diagnostics_frame([]))))
        self.assertTrue(math.isnan(sigma_stability_ratio(diagnostics_frame([_row(0.1)]))))


if __name__ == "__main__":
    unittest.main()
