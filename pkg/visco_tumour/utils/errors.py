"""
エラーハンドリングユーティリティ

シミュレーション固有の例外階層と、JSON-RPC 2.0のエラーオブジェクトの生成、
例外からJSON-RPCエラーへの変換を提供します。
"""
from typing import Any, Dict, Optional, Union
import traceback

from pydantic import ValidationError

# JSON-RPC 2.0標準エラーコード
PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603

# visco-tumour特有のエラーコード (サーバーエラー範囲: -32000 to -32099)
CONFIG_ERROR = -32000
MESH_ERROR = -32001
SPD_VIOLATION = -32002
LINEAR_SOLVER_ERROR = -32003
NONLINEAR_CONVERGENCE_ERROR = -32004
PRESET_NOT_FOUND = -32005
IO_ERROR = -32006

# エラーメッセージ
ERROR_MESSAGES = {
    PARSE_ERROR: "Parse error",
    INVALID_REQUEST: "Invalid Request",
    METHOD_NOT_FOUND: "Method not found",
    INVALID_PARAMS: "Invalid params",
    INTERNAL_ERROR: "Internal error",
    CONFIG_ERROR: "Invalid configuration",
    MESH_ERROR: "Mesh error",
    SPD_VIOLATION: "Conformation tensor lost positive definiteness",
    LINEAR_SOLVER_ERROR: "Linear solver failed",
    NONLINEAR_CONVERGENCE_ERROR: "Nonlinear iteration did not converge",
    PRESET_NOT_FOUND: "Preset not found",
    IO_ERROR: "I/O error",
}


class ViscoTumourError(Exception):
    """パッケージ共通の基底例外"""

    def __init__(self, message: str, data: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.data = data or {}


class ConfigurationError(ViscoTumourError, ValueError):
    """設定値の解析・検証エラー"""


class PresetNotFoundError(ConfigurationError):
    """未知のプリセット名"""


class MeshError(ViscoTumourError, ValueError):
    """メッシュ生成・細分化のエラー"""


class FieldError(ViscoTumourError, ValueError):
    """有限要素空間や場の不整合"""


class SpectralDomainError(ViscoTumourError, ValueError):
    """スペクトル関数が固有値で定義されない場合のエラー"""

    def __init__(self, message: str, eigenvalue: float, data: Optional[Dict[str, Any]] = None):
        payload = {"eigenvalue": float(eigenvalue)}
        payload.update(data or {})
        super().__init__(message, payload)
        self.eigenvalue = float(eigenvalue)


class SPDViolationError(SpectralDomainError):
    """頂点値が正定値でない場合のエラー"""

    def __init__(self, message: str, eigenvalue: float, vertex: Optional[int] = None):
        super().__init__(message, eigenvalue, {"vertex": vertex})
        self.vertex = vertex


class LinearSolverError(ViscoTumourError, RuntimeError):
    """線形ソルバーの収束失敗"""

    def __init__(self, message: str, report: Any = None, data: Optional[Dict[str, Any]] = None):
        payload = dict(data or {})
        if report is not None:
            payload["report"] = report
        super().__init__(message, payload)
        self.report = report


class StokesSolveError(LinearSolverError):
    """鞍点問題の求解失敗（Schur補元のスペクトル推定付き）"""


class NonlinearConvergenceError(ViscoTumourError, RuntimeError):
    """非線形反復が最大反復回数内に収束しない場合のエラー"""

    def __init__(self, message: str, history: Any = ()):
        super().__init__(message, {"history": list(history)})
        self.history = list(history)


def create_error_response(
    code: int,
    message: Optional[str] = None,
    data: Any = None,
    id: Optional[Union[str, int]] = None
) -> Dict[str, Any]:
    """
    JSON-RPC 2.0エラーレスポンスを生成します。

    Args:
        code: エラーコード
        message: エラーメッセージ (Noneの場合は標準メッセージを使用)
        data: 追加のエラーデータ (オプション)
        id: リクエストID (Noneの場合はIDなし)

    Returns:
        JSON-RPC 2.0形式のエラーレスポンス
    """
    if message is None:
        message = ERROR_MESSAGES.get(code, "Unknown error")

    error = {"code": code, "message": message}
    if data is not None:
        error["data"] = data

    return {"jsonrpc": "2.0", "error": error, "id": id}


def error_code_for(exception: Exception) -> int:
    """
    例外に対応するJSON-RPCエラーコードを返します。

    Args:
        exception: 発生した例外

    Returns:
        エラーコード
    """
    # 派生クラスを先に判定する
    if isinstance(exception, PresetNotFoundError):
        return PRESET_NOT_FOUND
    if isinstance(exception, (ConfigurationError, ValidationError)):
        return CONFIG_ERROR
    if isinstance(exception, MeshError):
        return MESH_ERROR
    if isinstance(exception, SpectralDomainError):
        return SPD_VIOLATION
    if isinstance(exception, LinearSolverError):
        return LINEAR_SOLVER_ERROR
    if isinstance(exception, NonlinearConvergenceError):
        return NONLINEAR_CONVERGENCE_ERROR
    if isinstance(exception, (FileNotFoundError, PermissionError, OSError)):
        return IO_ERROR
    if isinstance(exception, (ValueError, KeyError, TypeError)):
        return INVALID_PARAMS
    return INTERNAL_ERROR


def handle_exception(
    exception: Exception,
    id: Optional[Union[str, int]] = None,
    include_traceback: bool = False
) -> Dict[str, Any]:
    """
    Pythonの例外をJSON-RPCエラーレスポンスに変換します。

    Args:
        exception: 発生した例外
        id: リクエストID
        include_traceback: トレースバックを含めるかどうか

    Returns:
        JSON-RPC 2.0形式のエラーレスポンス
    """
    code = error_code_for(exception)
    if code == INTERNAL_ERROR:
        message = f"Internal error: {str(exception)}"
    elif isinstance(exception, KeyError) and not isinstance(exception, ViscoTumourError):
        message = f"Missing parameter: {str(exception)}"
    else:
        message = str(exception)

    data: Optional[Dict[str, Any]] = None
    if isinstance(exception, ViscoTumourError) and exception.data:
        data = dict(exception.data)
    if include_traceback:
        data = data or {}
        data["traceback"] = traceback.format_exc()

    return create_error_response(code, message, data, id)
