"""
プリセットによる実行の受け入れテスト

実行に数分かかるため、環境変数 VISCO_TUMOUR_SLOW が設定されている場合だけ実行します。
"""
from pathlib import Path
import os
import tempfile
import unittest

import numpy as np

from visco_tumour.config import load_config
from visco_tumour.diagnostics import sigma_stability_ratio
from visco_tumour.model import tumour_initial_data
from visco_tumour.solver.engine import run
from visco_tumour.utils.csv_log import DiagnosticsLog

SLOW = unittest.skipUnless(os.environ.get("VISCO_TUMOUR_SLOW"), "set VISCO_TUMOUR_SLOW=1 to run")


def run_preset(name, max_steps=None, csv_path=None, **overrides):
    config = load_config(preset=name, overrides=overrides)
    params = config.model
    callbacks = [DiagnosticsLog(csv_path)] if csv_path is not None else []
    result = run(
        params,
        tumour_initial_data(params.eps),
        config.mesh.to_policy(),
        callbacks=callbacks,
        max_steps=max_steps,
    )
    return config, result


def domain_area(config) -> float:
    return float(np.prod(np.subtract(config.mesh.upper, config.mesh.lower)))


class IdentityChecks:
    """保存則・発散拘束・μ の平均の残差の上限"""

    def assertIdentitiesHold(self, config, result):
        params = config.model
        area = domain_area(config)
        linear_tol = max(params.cg_tol, params.bicgstab_tol, params.saddle_tol)
        conservation = 10.0 * (params.tol_nonlinear + linear_tol) * area / params.dt
        # 発散拘束の許容値は鞍点ソルバーの相対残差なので、領域の大きさで絶対値に直す
        divergence = params.saddle_tol * area
        for row in result.diagnostics:
            self.assertLessEqual(row.res_cons, conservation, f"t={row.time}")
            self.assertLessEqual(row.res_div, divergence, f"t={row.time}")
            self.assertLessEqual(row.res_mu, conservation, f"t={row.time}")
            self.assertGreater(row.spd_margin, 0.0, f"t={row.time}")


@SLOW
class TestDissipativeRun(IdentityChecks, unittest.TestCase):
    """源泉項のない設定での散逸"""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.csv = Path(cls.tmp.name) / "first.csv"
        cls.config, cls.result = run_preset("smoke_dissipative", csv_path=cls.csv)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_runs_all_steps(self):
        self.assertEqual(self.result.steps, 50)

    def test_energy_does_not_increase(self):
        slack = 1e-6 * abs(self.result.initial_energy)
        energies = [self.result.initial_energy] + [row.energy for row in self.result.diagnostics]
        for previous, current in zip(energies, energies[1:]):
            self.assertLessEqual(current, previous + slack)
        general = [row.general_energy for row in self.result.diagnostics]
        for previous, current in zip(general, general[1:]):
            self.assertLessEqual(current, previous + slack)

    def test_identities_hold(self):
        self.assertIdentitiesHold(self.config, self.result)

    def test_rerun_writes_the_same_csv(self):
        again = Path(self.tmp.name) / "second.csv"
        _, result = run_preset("smoke_dissipative", csv_path=again)
        self.assertEqual(again.read_bytes(), self.csv.read_bytes())
        np.testing.assert_array_equal(result.state.phi.values, self.result.state.phi.values)
        np.testing.assert_array_equal(result.state.B.values, self.result.state.B.values)


@SLOW
class TestTumourGrowth(IdentityChecks, unittest.TestCase):
    """最初の実験 (κ_t = 0) を終了時刻まで"""

    PREFIX_STEPS = 40

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.csv = Path(cls.tmp.name) / "full.csv"
        cls.config, cls.result = run_preset("example1_k0", csv_path=cls.csv)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_reaches_the_final_time(self):
        self.assertEqual(self.result.steps, 400)
        self.assertAlmostEqual(self.result.state.time, 2.0)

    def test_volume_increases_every_step(self):
        volumes = [row.tumour_volume for row in self.result.diagnostics]
        for n, (previous, current) in enumerate(zip(volumes, volumes[1:]), start=2):
            self.assertGreater(current, previous - 1e-10, f"step {n}")
        self.assertGreater(volumes[-1], volumes[0])

    def test_few_nonlinear_iterations(self):
        for row in self.result.diagnostics:
            self.assertLessEqual(row.iters, 10, f"t={row.time}")
            self.assertGreater(row.spd_margin, 0.0, f"t={row.time}")

    def test_identities_hold(self):
        self.assertIdentitiesHold(self.config, self.result)

    def test_truncated_rerun_writes_a_prefix_of_the_csv(self):
        partial = Path(self.tmp.name) / "partial.csv"
        run_preset("example1_k0", max_steps=self.PREFIX_STEPS, csv_path=partial)
        lines = self.csv.read_bytes().splitlines(keepends=True)
        self.assertEqual(partial.read_bytes(), b"".join(lines[: self.PREFIX_STEPS + 1]))

    def test_sigma_ratio_under_uniform_refinement(self):
        """基礎格子と界面の目標要素径を半分にしても σ の安定性の比は ±10% に収まる"""
        steps = self.PREFIX_STEPS
        coarse = sigma_stability_ratio(self.result.frame().iloc[:steps])
        mesh = self.config.mesh
        _, refined = run_preset(
            "example1_k0",
            max_steps=steps,
            mesh={"n_coarse": 2 * mesh.n_coarse, "h_f": 0.5 * mesh.h_f},
        )
        fine = sigma_stability_ratio(refined.frame())
        self.assertTrue(np.isfinite(coarse))
        self.assertLessEqual(abs(fine - coarse), 0.1 * coarse)
        self.assertAlmostEqual(
            sigma_stability_ratio(self.result.frame()), self.result.summary()["sigma_stability_ratio"]
        )


@SLOW
class TestRelaxationLimit(unittest.TestCase):
    """τ̄ が小さい極限では B は単位行列に近いまま"""

    def test_fast_relaxation_keeps_identity(self):
        config, result = run_preset("chs_limit")
        self.assertEqual(result.steps, 100)
        B = result.state.B.values
        deviation = np.max(np.abs(B[:, :2] - 1.0), initial=0.0)
        deviation = max(deviation, float(np.max(np.abs(B[:, 2]))))
        self.assertLessEqual(deviation, 0.05)
        self.assertGreater(min(row.spd_margin for row in result.diagnostics), 0.0)


if __name__ == "__main__":
    unittest.main()
