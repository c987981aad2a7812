"""
カスタムJSONエンコーダー

NumPy・pandas の値や結果のデータクラスを含むレスポンスをシリアライズします。
"""
import json
from typing import Any
import logging

from visco_tumour.utils.converters import to_serializable

# ロガーの設定
logger = logging.getLogger(__name__)


class ViscoTumourJSONEncoder(json.JSONEncoder):
    """
    visco-tumour用のカスタムJSONエンコーダー

    標準のJSONEncoderが扱えないオブジェクトを to_serializable で変換します。
    """

    def default(self, obj: Any) -> Any:
        result = to_serializable(obj)
        if result is obj:
            return super().default(obj)
        return result


def json_dumps(obj: Any) -> str:
    """
    オブジェクトをJSON文字列に変換します。

    浮動小数点数の NaN / Infinity は null になります。

    Args:
        obj: 変換するオブジェクト

    Returns:
        JSON文字列
    """
    try:
        return json.dumps(to_serializable(obj), cls=ViscoTumourJSONEncoder, allow_nan=False)
    except Exception as e:
        logger.error(f"JSON serialization error: {str(e)}")
        return json.dumps({"error": f"Serialization error: {str(e)}"})
