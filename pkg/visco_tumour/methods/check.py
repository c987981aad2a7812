"""
検証関連のRPCメソッド
"""
from typing import Any, Dict, Optional
import asyncio

from visco_tumour.adapters.check_adapter import CheckAdapter
from visco_tumour.schemas.rpc import CheckRunRequest, parse_params


class CheckMethods:
    """
    check.* 名前空間のRPCメソッド実装
    """

    @staticmethod
    async def run(params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        check.run: 性質検証スイートを実行します。

        Args:
            params: パラメータオブジェクト (オプション)
                - names (Optional[List[str]]): スイート名
                - seed (Optional[int]): 乱数シード
                - scale (Optional[float]): 標本数の倍率 (0 < scale ≤ 1)

        Returns:
            全体の合否とスイートごとの結果
        """
        request = parse_params(CheckRunRequest, params)
        return await asyncio.to_thread(CheckAdapter.run, request.names, request.seed, request.scale)
