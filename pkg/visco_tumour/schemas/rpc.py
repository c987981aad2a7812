"""
RPCメソッドのパラメータスキーマ
"""
from typing import Any, Dict, List, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError


class ConfigSource(BaseModel):
    """プリセット・設定ファイル・上書きの組"""
    model_config = ConfigDict(extra="forbid")

    preset: Optional[str] = None
    config: Optional[str] = Field(None, description="TOML設定ファイルのパス")
    overrides: Dict[str, Any] = Field(default_factory=dict)


class SimulationRunRequest(ConfigSource):
    """simulation.runリクエストパラメータ"""
    output_dir: Optional[str] = None
    max_steps: Optional[int] = Field(None, ge=0)
    write_outputs: bool = True
    include_rows: bool = True


class SimulationEnergyRequest(ConfigSource):
    """simulation.energyリクエストパラメータ"""


class MeshInfoRequest(ConfigSource):
    """mesh.infoリクエストパラメータ"""
    write_path: Optional[str] = Field(None, description="メッシュをVTKで書き出すパス")


class CheckRunRequest(BaseModel):
    """check.runリクエストパラメータ"""
    model_config = ConfigDict(extra="forbid")

    names: Optional[List[str]] = None
    seed: int = 0
    scale: float = Field(1.0, gt=0, le=1.0, description="標本数の倍率")


RequestModel = TypeVar("RequestModel", bound=BaseModel)


def parse_params(model: Type[RequestModel], params: Optional[Dict[str, Any]]) -> RequestModel:
    """
    パラメータを検証します。

    Raises:
        ValueError: パラメータが不正な場合 (Invalid params として返されます)
    """
    try:
        return model.model_validate(params or {})
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in item['loc']) or '<params>'}: {item['msg']}"
            for item in e.errors()
        )
        raise ValueError(f"Invalid params for {model.__name__}: {problems}") from None
