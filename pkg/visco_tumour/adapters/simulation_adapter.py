"""
シミュレーションアダプター

設定から実行を組み立て、VTKとCSVの書き出しを行うインターフェースを提供します。
CLIとRPCメソッドの両方から使われます。
"""
from pathlib import Path
from typing import Any, Dict, List, Optional
import logging

from visco_tumour.diagnostics import StepDiagnostics, discrete_energy, general_energy, spd_margin, tumour_volume
from visco_tumour.model import tumour_initial_data
from visco_tumour.presets import PRESETS
from visco_tumour.schemas.config import RunConfig
from visco_tumour.solver.engine import RunResult, build_initial_mesh, initial_state, run
from visco_tumour.solver.operators import SchemeOperators
from visco_tumour.solver.state import FieldState
from visco_tumour.utils.csv_log import DiagnosticsLog
from visco_tumour.utils.vtk_writer import write_vtk

# ロガーの設定
logger = logging.getLogger(__name__)


class VtkSeries:
    """
    出力間隔ごとに状態をVTKで書き出すコールバック

    Args:
        directory: 出力ディレクトリ
        stride: 書き出すステップ間隔 (0なら書き出さない)
    """

    def __init__(self, directory: Path, stride: int):
        self.directory = Path(directory)
        self.stride = stride
        self.paths: List[Path] = []

    def write(self, state: FieldState) -> None:
        self.paths.append(write_vtk(state, self.directory / f"state_{state.n:05d}.vtk"))

    def __call__(self, state: FieldState, row: StepDiagnostics) -> None:
        if self.stride > 0 and state.n % self.stride == 0:
            self.write(state)


class SimulationAdapter:
    """
    シミュレーション実行に対するアダプタークラス
    """

    @staticmethod
    def list_presets() -> List[Dict[str, Any]]:
        """
        プリセットの一覧を取得します。

        Returns:
            名前・説明・上書き値のリスト
        """
        return [
            {"name": preset.name, "description": preset.description, "overrides": preset.document()}
            for preset in PRESETS.values()
        ]

    @staticmethod
    def run(
        config: RunConfig,
        max_steps: Optional[int] = None,
        write_outputs: bool = True,
        include_rows: bool = True,
    ) -> Dict[str, Any]:
        """
        設定に従って実行します。

        CSVは1ステップごとに追記されるため、失敗した場合もそれまでの行は残ります。

        Args:
            config: 実行設定
            max_steps: ステップ数の上限 (省略可)
            write_outputs: VTKとCSVを書き出すかどうか
            include_rows: 戻り値に診断量の行を含めるかどうか

        Returns:
            実行のまとめ (summary, csv, vtk, diagnostics)

        Raises:
            ConfigurationError, SPDViolationError, NonlinearConvergenceError, LinearSolverError
        """
        params = config.model
        output = config.output
        callbacks = []
        log: Optional[DiagnosticsLog] = None
        series: Optional[VtkSeries] = None
        if write_outputs:
            log = DiagnosticsLog(output.directory / output.csv_name)
            series = VtkSeries(output.directory, output.stride)
            callbacks = [log, series]
            logger.info(f"Writing outputs to {output.directory}")

        on_initial = series.write if series is not None and output.write_initial and output.stride > 0 else None
        result: RunResult = run(
            params,
            tumour_initial_data(params.eps),
            config.mesh.to_policy(),
            callbacks=callbacks,
            max_steps=max_steps,
            on_initial=on_initial,
        )
        response: Dict[str, Any] = {
            "preset": config.preset,
            "summary": result.summary(),
            "meshes": result.meshes,
            "csv": str(log.path) if log is not None else None,
            "vtk": [str(path) for path in series.paths] if series is not None else [],
        }
        if include_rows:
            response["diagnostics"] = result.frame().to_dict(orient="records")
        return response

    @staticmethod
    def energy(config: RunConfig) -> Dict[str, Any]:
        """
        初期状態のエネルギーと診断量を計算します。

        Args:
            config: 実行設定

        Returns:
            energy, general_energy, tumour_volume, spd_margin とメッシュの大きさ
        """
        params = config.model
        data = tumour_initial_data(params.eps)
        mesh = build_initial_mesh(config.mesh.to_policy(), data, params)
        state = initial_state(SchemeOperators(mesh, params), data)
        return {
            "preset": config.preset,
            "energy": discrete_energy(state, params),
            "general_energy": general_energy(state, params),
            "tumour_volume": tumour_volume(state.phi),
            "spd_margin": spd_margin(state.B),
            "vertices": mesh.num_vertices,
            "elements": mesh.num_elements,
        }
