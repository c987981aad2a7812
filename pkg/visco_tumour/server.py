"""
JSON-RPCサーバーの実装

FastAPIを使用したJSON-RPC 2.0サーバーの実装を提供します。
"""
from typing import Dict, Any, List, Optional
import asyncio
import logging
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import ValidationError
import uvicorn

from visco_tumour import __version__
from visco_tumour.schemas.base import JsonRpcRequest
from visco_tumour.utils.errors import (
    PARSE_ERROR, INVALID_REQUEST, METHOD_NOT_FOUND,
    create_error_response, handle_exception
)
from visco_tumour.utils.json_encoder import json_dumps
from visco_tumour.methods.check import CheckMethods
from visco_tumour.methods.mesh import MeshMethods
from visco_tumour.methods.simulation import SimulationMethods


# ロガーの設定
logger = logging.getLogger(__name__)

# FastAPIアプリケーションの作成
app = FastAPI(
    title="visco-tumour",
    description="JSON-RPC 2.0 API for the viscoelastic tumour growth simulator",
    version=__version__
)

# CORS設定
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# メソッドディスパッチャー
method_dispatcher = {
    # Simulation メソッド
    "simulation.presets": SimulationMethods.presets,
    "simulation.run": SimulationMethods.run,
    "simulation.energy": SimulationMethods.energy,

    # Mesh メソッド
    "mesh.info": MeshMethods.info,

    # Check メソッド
    "check.run": CheckMethods.run,
}


async def process_request(request_data: Any) -> Optional[Dict[str, Any]]:
    """
    単一のJSON-RPCリクエストを処理します。

    Args:
        request_data: JSON-RPCリクエストオブジェクト

    Returns:
        JSON-RPCレスポンスオブジェクト (通知の場合はNone)
    """
    # リクエストの検証
    if not isinstance(request_data, dict):
        return create_error_response(INVALID_REQUEST, id=None)
    try:
        request = JsonRpcRequest.model_validate(request_data)
    except ValidationError:
        request_id = request_data.get("id")
        return create_error_response(
            INVALID_REQUEST, id=request_id if isinstance(request_id, (str, int)) else None
        )

    # IDの取得（通知の場合はNone）
    request_id = request.id
    method = request.method
    params = request.params

    # メソッドの存在確認
    if method not in method_dispatcher:
        if request.is_notification:
            return None
        return create_error_response(METHOD_NOT_FOUND, id=request_id)

    # メソッドの実行
    try:
        handler = method_dispatcher[method]
        if isinstance(params, list):
            raise TypeError(f"Method {method} expects named params")
        result = await handler(params) if params else await handler()

        # 通知の場合はレスポンスを返さない
        if request.is_notification:
            return None

        # 正常レスポンスの作成
        return {
            "jsonrpc": "2.0",
            "result": result,
            "id": request_id
        }
    except Exception as e:
        # エラーをJSON-RPC形式に変換
        logger.exception(f"Error processing method {method}: {str(e)}")
        if request.is_notification:
            return None
        return handle_exception(e, request_id, include_traceback=False)


async def process_batch_request(batch_request: List[Any]) -> List[Dict[str, Any]]:
    """
    バッチリクエストを処理します。

    Args:
        batch_request: JSON-RPCリクエストオブジェクトのリスト

    Returns:
        JSON-RPCレスポンスオブジェクトのリスト
    """
    # 並列処理のためのタスク作成
    tasks = [process_request(req) for req in batch_request]

    # 全タスクを実行
    responses = await asyncio.gather(*tasks)

    # Noneの応答（通知）を除去
    return [r for r in responses if r is not None]


@app.post("/rpc")
async def handle_rpc(request: Request) -> Response:
    """
    JSON-RPC 2.0リクエストを処理するエンドポイント

    Args:
        request: FastAPIリクエストオブジェクト

    Returns:
        JSON-RPCレスポンス
    """
    try:
        # リクエストボディのパース
        request_data = await request.json()
    except Exception as e:
        logger.warning(f"Cannot parse RPC request body: {str(e)}")
        return Response(
            content=json_dumps(create_error_response(PARSE_ERROR, id=None)),
            media_type="application/json"
        )

    # リクエストの型に応じた処理
    if isinstance(request_data, list):
        # バッチリクエスト
        if not request_data:
            # 空配列はエラー
            response_data = create_error_response(INVALID_REQUEST, id=None)
        else:
            response_data = await process_batch_request(request_data)
            # レスポンスが空の場合は何も返さない
            if not response_data:
                return Response(status_code=204)
    else:
        # 単一リクエスト
        response_data = await process_request(request_data)
        # 通知の場合は何も返さない
        if response_data is None:
            return Response(status_code=204)

    return Response(
        content=json_dumps(response_data),
        media_type="application/json"
    )


@app.get("/health")
async def health_check() -> Dict[str, str]:
    """
    ヘルスチェックエンドポイント

    Returns:
        ステータス情報
    """
    return {"status": "ok", "version": __version__}


def start_server(host: str = "127.0.0.1", port: int = 8000):
    """
    サーバーを起動します。

    Args:
        host: ホストアドレス
        port: ポート番号
    """
    uvicorn.run(app, host=host, port=port)
