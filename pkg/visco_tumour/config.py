"""
設定の読み込み

TOML文書をプリセットの値に深くマージし、RunConfig として検証します。
"""
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union
import logging
import os
import tomllib

from pydantic import ValidationError

from visco_tumour.presets import get_preset
from visco_tumour.schemas.config import RunConfig
from visco_tumour.utils.errors import ConfigurationError

# ロガーの設定
logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "VISCO_TUMOUR_OUTPUT_DIR"


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """
    override の値で base を上書きした新しい辞書を返します (入れ子の辞書は再帰的にマージ)。
    """
    merged: Dict[str, Any] = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _key_path(location) -> str:
    return ".".join(str(part) for part in location) or "<root>"


def describe_validation_error(error: ValidationError) -> str:
    """ValidationError を 'model.eps: ...' 形式のメッセージにします。"""
    lines = [f"{_key_path(item['loc'])}: {item['msg']}" for item in error.errors()]
    return "; ".join(lines)


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    """
    TOML文書を読み込みます。

    Raises:
        FileNotFoundError: ファイルが存在しない場合
        ConfigurationError: 構文エラーの場合
    """
    path = Path(path)
    with path.open("rb") as handle:
        try:
            return tomllib.load(handle)
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"Cannot parse config '{path}': {e}", {"path": str(path)}) from e


def build_config(document: Mapping[str, Any]) -> RunConfig:
    """
    設定文書を検証して RunConfig を作ります。

    Raises:
        ConfigurationError: 未知のキー、範囲外の値など (メッセージにキーのパスを含む)
    """
    try:
        return RunConfig.model_validate(dict(document))
    except ValidationError as e:
        locations = [_key_path(item["loc"]) for item in e.errors()]
        raise ConfigurationError(
            f"Invalid configuration: {describe_validation_error(e)}", {"keys": locations}
        ) from e


def load_config(
    path: Optional[Union[str, Path]] = None,
    preset: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> RunConfig:
    """
    設定を読み込みます。

    優先順位は プリセット < ファイル < overrides < 環境変数 < output_dir です。
    プリセット名は引数、ファイルの preset キーの順に探します。

    Args:
        path: TOMLファイルのパス (省略可)
        preset: プリセット名 (省略可)
        overrides: 入れ子の辞書による上書き (省略可)
        output_dir: 出力ディレクトリ (省略可)

    Returns:
        検証済みの RunConfig

    Raises:
        FileNotFoundError: ファイルが存在しない場合
        PresetNotFoundError: 未知のプリセット名
        ConfigurationError: 検証エラー
    """
    document: Dict[str, Any] = read_document(path) if path is not None else {}
    name = preset or document.get("preset")
    merged: Dict[str, Any] = {}
    if name:
        merged = get_preset(name).document()
        merged["preset"] = name
    merged = deep_merge(merged, document)
    if name:
        merged["preset"] = name
    if overrides:
        merged = deep_merge(merged, overrides)

    directory = output_dir or os.environ.get(OUTPUT_DIR_ENV)
    if directory:
        merged = deep_merge(merged, {"output": {"directory": str(directory)}})

    config = build_config(merged)
    logger.debug(f"Loaded configuration (preset={config.preset}, path={path})")
    return config
