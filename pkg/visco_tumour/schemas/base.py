"""
JSON-RPC 2.0 基本スキーマ

JSON-RPC 2.0プロトコルのリクエストのスキーマを定義します。
"""
from typing import Any, Dict, List, Literal, Optional, Union
from pydantic import BaseModel


class JsonRpcRequest(BaseModel):
    """JSON-RPC 2.0リクエスト"""
    jsonrpc: Literal["2.0"] = "2.0"
    method: str
    params: Optional[Union[Dict[str, Any], List[Any]]] = None
    id: Optional[Union[str, int]] = None

    @property
    def is_notification(self) -> bool:
        return self.id is None
