"""
実行設定のスキーマ

TOML文書とプリセットから構成される RunConfig を定義します。未知のキーは拒否します。
"""
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from visco_tumour.fem.mesh import SIDES, BoundarySegment
from visco_tumour.model import ModelParams
from visco_tumour.solver.engine import MeshPolicy


class DirichletSegment(BaseModel):
    """Dirichlet境界区間 (lower/upper を省略すると辺全体)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    side: Literal["xmin", "xmax", "ymin", "ymax"]
    lower: Optional[float] = None
    upper: Optional[float] = None

    @model_validator(mode="after")
    def _check_interval(self) -> "DirichletSegment":
        if self.lower is not None and self.upper is not None and self.upper <= self.lower:
            raise ValueError(f"Segment on '{self.side}' has upper <= lower")
        return self

    def to_segment(self) -> BoundarySegment:
        return BoundarySegment(self.side, self.lower, self.upper)


class MeshSettings(BaseModel):
    """メッシュ設定"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lower: Tuple[float, float] = (-5.0, -5.0)
    upper: Tuple[float, float] = (5.0, 5.0)
    n_coarse: int = Field(32, ge=1, description="基礎格子の各軸のセル数")
    dirichlet: List[DirichletSegment] = Field(
        default_factory=lambda: [DirichletSegment(side="xmin")],
        description="速度のDirichlet境界",
    )
    h_f: Optional[float] = Field(None, gt=0, description="界面近傍の目標要素径 (省略で細分化なし)")
    remesh_interval: int = Field(5, ge=0, description="再メッシュの間隔 (0で初期メッシュのみ)")
    indicator_threshold: Optional[float] = Field(None, gt=0)
    coarsen_delay: int = Field(5, ge=0)

    @field_validator("dirichlet")
    @classmethod
    def _check_sides(cls, value: List[DirichletSegment]) -> List[DirichletSegment]:
        if not value:
            raise ValueError("At least one Dirichlet segment is required for the Stokes problem")
        unknown = [segment.side for segment in value if segment.side not in SIDES]
        if unknown:
            raise ValueError(f"Unknown sides {unknown}")
        return value

    @model_validator(mode="after")
    def _check_box(self) -> "MeshSettings":
        if not (self.upper[0] > self.lower[0] and self.upper[1] > self.lower[1]):
            raise ValueError(f"Degenerate box: lower={list(self.lower)}, upper={list(self.upper)}")
        return self

    def to_policy(self) -> MeshPolicy:
        return MeshPolicy(
            lower=tuple(self.lower),
            upper=tuple(self.upper),
            n_coarse=self.n_coarse,
            dirichlet=tuple(segment.to_segment() for segment in self.dirichlet),
            target_h=self.h_f,
            remesh_interval=self.remesh_interval,
            indicator_threshold=self.indicator_threshold,
            coarsen_delay=self.coarsen_delay,
        )


class OutputSettings(BaseModel):
    """出力設定"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    directory: Path = Path("output")
    stride: int = Field(10, ge=0, description="VTKを書き出すステップ間隔 (0で書き出さない)")
    csv_name: str = "diagnostics.csv"
    write_initial: bool = True


class RunConfig(BaseModel):
    """実行設定"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    preset: Optional[str] = None
    seed: int = 0
    threads: int = Field(1, ge=1)
    model: ModelParams = Field(default_factory=ModelParams)
    mesh: MeshSettings = Field(default_factory=MeshSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    @property
    def params(self) -> ModelParams:
        return self.model
