"""
データ変換ユーティリティ

シミュレーションの結果オブジェクトとJSON-RPC間でのデータ変換を行います。
"""
from typing import Any
from pathlib import PurePath
import dataclasses
import datetime
import logging
import math

import numpy as np
import pandas as pd
from pydantic import BaseModel


# ロガーの設定
logger = logging.getLogger(__name__)


def _finite_or_none(value: float):
    # JSONは NaN / Infinity を表現できない
    return value if math.isfinite(value) else None


def to_serializable(obj: Any) -> Any:
    """
    オブジェクトをJSONシリアライズ可能な形式に変換します。

    非有限の浮動小数点数は None になります。

    Args:
        obj: 変換するオブジェクト

    Returns:
        JSONシリアライズ可能なオブジェクト
    """
    # 基本型はそのまま返す
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite_or_none(float(obj))

    # 日付型の変換
    if isinstance(obj, (datetime.datetime, datetime.date)):
        return obj.isoformat()

    if isinstance(obj, PurePath):
        return str(obj)

    # リストの変換（再帰的に変換）
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [to_serializable(item) for item in obj]

    # 辞書の変換（再帰的に変換）
    if isinstance(obj, dict):
        return {str(k): to_serializable(v) for k, v in obj.items()}

    # NumPy配列の変換
    if isinstance(obj, np.ndarray):
        return to_serializable(obj.tolist())

    # Pandas DataFrameの変換
    if isinstance(obj, pd.DataFrame):
        return {
            "type": "dataframe",
            "index": to_serializable(obj.index.tolist()),
            "columns": to_serializable(obj.columns.tolist()),
            "data": to_serializable(obj.values.tolist())
        }

    # Pandas Seriesの変換
    if isinstance(obj, pd.Series):
        return {
            "type": "series",
            "index": to_serializable(obj.index.tolist()),
            "data": to_serializable(obj.values.tolist())
        }

    if isinstance(obj, BaseModel):
        return to_serializable(obj.model_dump(mode="python"))

    # 結果・診断のデータクラス
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        to_dict = getattr(obj, "to_dict", None)
        if callable(to_dict):
            return to_serializable(to_dict())
        return {
            f.name: to_serializable(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
        }

    # その他のオブジェクトは文字列に変換
    return str(obj)
