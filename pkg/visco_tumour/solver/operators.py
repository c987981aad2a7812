"""
メッシュごとに再利用する離散演算子

時間ステップに依存しない行列 (集中質量、剛性、境界質量、粘性、発散) と
鞍点ソルバーの分解をメッシュ世代ごとに一度だけ組み立てます。
"""
from functools import cached_property
import logging

import numpy as np
from scipy import sparse

from visco_tumour.fem.assembly import (
    VelocityIntegrals,
    boundary_mass,
    divergence_matrix,
    lumped_mass,
    mass_matrix,
    stiffness_matrix,
    velocity_integrals,
    viscous_matrix,
)
from visco_tumour.fem.fespace import MatrixSpace, ScalarSpace, VelocitySpace
from visco_tumour.fem.mesh import TriMesh
from visco_tumour.model import ModelParams
from visco_tumour.solver.linear import SaddlePointSolver
from visco_tumour.utils.errors import MeshError

# ロガーの設定
logger = logging.getLogger(__name__)


class SchemeOperators:
    """
    1つのメッシュ上の空間と定数行列

    Args:
        mesh: 計算メッシュ
        params: モデルパラメータ (η̄, 要素の種類, 許容値を参照)
    """

    def __init__(self, mesh: TriMesh, params: ModelParams):
        self.mesh = mesh
        self.params = params
        self.scalar = ScalarSpace(mesh)
        self.matrix = MatrixSpace(mesh)
        self.velocity = VelocitySpace(mesh, params.element_variant)

    @property
    def pressure(self) -> ScalarSpace:
        return self.scalar

    @cached_property
    def weights(self) -> np.ndarray:
        return self.scalar.vertex_weights

    @cached_property
    def lumped(self) -> sparse.csr_matrix:
        return lumped_mass(self.scalar)

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        return stiffness_matrix(self.scalar)

    @cached_property
    def h1(self) -> sparse.csr_matrix:
        """整合質量 + 剛性"""
        return (mass_matrix(self.scalar) + self.stiffness).tocsr()

    @cached_property
    def boundary(self) -> sparse.csr_matrix:
        return boundary_mass(self.scalar, "all")

    @cached_property
    def integrals(self) -> VelocityIntegrals:
        return velocity_integrals(self.velocity)

    @cached_property
    def viscous(self) -> sparse.csr_matrix:
        return viscous_matrix(self.velocity, self.params.eta_bar, self.integrals)

    @cached_property
    def divergence(self) -> sparse.csr_matrix:
        return divergence_matrix(self.velocity, self.pressure, self.integrals)

    @cached_property
    def stress_diffusion(self) -> sparse.csr_matrix:
        """集中質量 + Δtα 剛性"""
        return (self.lumped + self.params.dt * self.params.alpha * self.stiffness).tocsr()

    @cached_property
    def saddle(self) -> SaddlePointSolver:
        free = self.velocity.free_dofs
        if free.size == self.velocity.dim:
            raise MeshError("Stokes problem needs a Dirichlet boundary part of positive length")
        A = self.viscous[free][:, free]
        B = self.divergence[:, free]
        logger.debug(
            f"Factorizing velocity block: {free.size} free velocity dofs, {self.pressure.dim} pressure dofs"
        )
        return SaddlePointSolver(A, B, self.weights, self.params.eta_bar, tol=self.params.saddle_tol)

    def p1_gradients(self, values: np.ndarray) -> np.ndarray:
        """(Ne, d) P1場の要素ごとの勾配"""
        local = np.asarray(values, dtype=float)[self.mesh.simplices]
        return np.einsum("ekd,ek->ed", self.mesh.basis_gradients, local)

    def vertex_sum(self, contributions: np.ndarray) -> np.ndarray:
        """(Ne, d+1, ...) の要素寄与を頂点へ集約します。"""
        out = np.zeros((self.mesh.num_vertices,) + contributions.shape[2:])
        np.add.at(out, self.mesh.simplices, contributions)
        return out
