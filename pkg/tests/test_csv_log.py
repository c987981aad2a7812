"""
診断量CSVのテスト
"""
from pathlib import Path
import tempfile
import unittest

from visco_tumour.diagnostics import CSV_COLUMNS, StepDiagnostics
from visco_tumour.utils.csv_log import DiagnosticsLog, read_diagnostics


def _row(time: float, energy: float = 1.0) -> StepDiagnostics:
    return StepDiagnostics(
        time=time, energy=energy, tumour_volume=0.1 + time, spd_margin=0.9, iters=4,
        res_cons=1e-15, res_div=2e-14, res_mu=3e-16, sigma_h1=0.7,
    )


class TestDiagnosticsLog(unittest.TestCase):
    """DiagnosticsLog のテスト"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "out" / "diagnostics.csv"

    def test_header_only(self):
        DiagnosticsLog(self.path)
        self.assertEqual(self.path.read_text().strip(), ",".join(CSV_COLUMNS))

    def test_rows_are_written_exactly(self):
        log = DiagnosticsLog(self.path)
        log.append(_row(0.005, energy=1.0 / 3.0))
        log(None, _row(0.01))
        self.assertEqual(log.rows, 2)
        frame = read_diagnostics(self.path)
        self.assertEqual(list(frame.columns), list(CSV_COLUMNS))
        self.assertEqual(frame["energy"].iloc[0], 1.0 / 3.0)
        self.assertEqual(frame["time"].tolist(), [0.005, 0.01])
        self.assertEqual(frame["res_div"].iloc[1], 2e-14)
        self.assertEqual(frame["iters"].tolist(), [4, 4])

    def test_time_must_increase(self):
        log = DiagnosticsLog(self.path)
        log.append(_row(0.01))
        with self.assertRaises(ValueError):
            log.append(_row(0.01))
        self.assertEqual(len(read_diagnostics(self.path)), 1)


if __name__ == "__main__":
    unittest.main()
