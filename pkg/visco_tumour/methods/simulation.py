"""
シミュレーション関連のRPCメソッド

simulation.* のJSON-RPCメソッドを実装します。
計算はイベントループを塞がないようにワーカースレッドで実行します。
"""
from typing import Any, Dict, List, Optional
import asyncio

from visco_tumour.adapters.simulation_adapter import SimulationAdapter
from visco_tumour.config import load_config
from visco_tumour.schemas.rpc import SimulationEnergyRequest, SimulationRunRequest, parse_params


class SimulationMethods:
    """
    simulation.* 名前空間のRPCメソッド実装
    """

    @staticmethod
    async def presets(params: Optional[Dict[str, Any]] = None) -> List[Dict[str, Any]]:
        """
        simulation.presets: プリセットの一覧を取得します。

        Returns:
            名前・説明・上書き値のリスト
        """
        return SimulationAdapter.list_presets()

    @staticmethod
    async def run(params: Dict[str, Any]) -> Dict[str, Any]:
        """
        simulation.run: プリセットまたは設定で実行します。

        Args:
            params: パラメータオブジェクト
                - preset (Optional[str]): プリセット名
                - config (Optional[str]): TOML設定ファイルのパス
                - overrides (Optional[dict]): 設定の上書き
                - output_dir (Optional[str]): 出力ディレクトリ
                - max_steps (Optional[int]): ステップ数の上限
                - write_outputs (Optional[bool]): VTKとCSVを書き出すかどうか
                - include_rows (Optional[bool]): 診断量の行を返すかどうか

        Returns:
            実行のまとめと診断量の行
        """
        request = parse_params(SimulationRunRequest, params)
        config = load_config(
            request.config, preset=request.preset, overrides=request.overrides, output_dir=request.output_dir
        )
        return await asyncio.to_thread(
            SimulationAdapter.run,
            config,
            max_steps=request.max_steps,
            write_outputs=request.write_outputs,
            include_rows=request.include_rows,
        )

    @staticmethod
    async def energy(params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        simulation.energy: 初期状態のエネルギーを計算します。

        Args:
            params: パラメータオブジェクト
                - preset / config / overrides: 設定

        Returns:
            エネルギーと初期診断量
        """
        request = parse_params(SimulationEnergyRequest, params)
        config = load_config(request.config, preset=request.preset, overrides=request.overrides)
        return await asyncio.to_thread(SimulationAdapter.energy, config)
