"""
ソルバーの状態と報告

1時間ステップ分の解 (φ, μ, σ, p, v, B) と線形ソルバーの報告を保持する不変な値型です。
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from visco_tumour.fem.fespace import MatrixField, ScalarField, VectorField
from visco_tumour.fem.mesh import TriMesh
from visco_tumour.utils.errors import FieldError


@dataclass(frozen=True)
class LinearSolveReport:
    """線形ソルバーの結果 (converged なら residual ≤ tolerance)"""
    method: str
    iterations: int
    residual: float
    tolerance: float
    converged: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class FieldState:
    """時間レベル n の解"""
    n: int
    time: float
    phi: ScalarField
    mu: ScalarField
    sigma: ScalarField
    p: ScalarField
    v: VectorField
    B: MatrixField
    nonlinear_iters: int = 0
    residual_log: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        mesh = self.phi.space.mesh
        for name in ("mu", "sigma", "p", "v", "B"):
            if getattr(self, name).space.mesh is not mesh:
                raise FieldError(f"Field '{name}' lives on a different mesh than phi")

    @property
    def mesh(self) -> TriMesh:
        return self.phi.space.mesh

    def max_increment(self, other: "FieldState") -> float:
        """各未知量の最大ノルム差の最大値"""
        pairs = [
            (self.phi, other.phi),
            (self.mu, other.mu),
            (self.p, other.p),
            (self.v, other.v),
            (self.B, other.B),
        ]
        return max(float(np.max(np.abs(a.values - b.values), initial=0.0)) for a, b in pairs)
