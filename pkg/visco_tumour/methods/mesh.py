"""
メッシュ関連のRPCメソッド
"""
from typing import Any, Dict, Optional
import asyncio

from visco_tumour.adapters.mesh_adapter import MeshAdapter
from visco_tumour.config import load_config
from visco_tumour.schemas.rpc import MeshInfoRequest, parse_params


class MeshMethods:
    """
    mesh.* 名前空間のRPCメソッド実装
    """

    @staticmethod
    async def info(params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        mesh.info: 初期メッシュの情報を取得します。

        Args:
            params: パラメータオブジェクト
                - preset / config / overrides: 設定
                - write_path (Optional[str]): メッシュVTKの出力パス

        Returns:
            頂点数・要素数・要素径の範囲など
        """
        request = parse_params(MeshInfoRequest, params)
        config = load_config(request.config, preset=request.preset, overrides=request.overrides)
        return await asyncio.to_thread(MeshAdapter.info, config, request.write_path)
