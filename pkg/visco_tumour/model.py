"""
腫瘍成長モデルの係数関数とパラメータ

ソース項、易動度・材料関数、二重井戸ポテンシャルの凸凹分割、
κ の差分商、および初期値・境界値の構成を提供します。
"""
from dataclasses import dataclass
from typing import Callable, Literal, NamedTuple, Optional
import logging
import math

import numpy as np
from scipy.sparse.linalg import spsolve
from pydantic import BaseModel, ConfigDict, Field, model_validator

from visco_tumour.fem.assembly import boundary_mass, lumped_mass, stiffness_matrix
from visco_tumour.fem.fespace import (
    MatrixField,
    MatrixSpace,
    ScalarField,
    ScalarSpace,
    element_load,
    interpolate_nodal,
    lumped_project,
    pack_symmetric,
)
from visco_tumour.fem.quadrature import gauss_legendre_facet, quadrature_rule
from visco_tumour.fem.tensorcalc import min_eigenvalues
from visco_tumour.solver.linear import solve_spd
from visco_tumour.utils.errors import SPDViolationError

# ロガーの設定
logger = logging.getLogger(__name__)

MOBILITY_FLOOR = 1e-12


class ModelParams(BaseModel):
    """モデル定数と離散化・ソルバーの設定"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    dt: float = Field(0.005, gt=0, description="時間刻み")
    P: float = Field(0.2, ge=0, description="増殖率")
    eps: float = Field(0.02, gt=0, description="界面幅")
    beta: float = Field(0.1, gt=0, description="表面張力")
    chi_phi: float = Field(4.0, description="走化性")
    kappa_t: float = 0.0
    C_consumption: float = Field(2.0, ge=0)
    K_boundary: float = Field(10.0, gt=0)
    eta_bar: float = Field(10.0, gt=0)
    G_stress: float = Field(0.0, ge=0)
    tau_bar: float = Field(100.0, gt=0)
    alpha: float = Field(0.001, gt=0, description="応力拡散")
    T_end: float = Field(2.0, ge=0)
    dt_max: float = Field(0.05, gt=0, description="時間刻みの上限")
    tol_nonlinear: float = Field(1e-7, gt=0)
    max_nonlinear_iters: int = Field(30, ge=1)
    element_variant: Literal["taylor_hood", "mini"] = "taylor_hood"
    cg_tol: float = Field(1e-10, gt=0)
    bicgstab_tol: float = Field(1e-10, gt=0)
    saddle_tol: float = Field(1e-9, gt=0)
    naive_lambda: bool = False
    relaxation_stabilization: bool = False
    initial_method: Literal["interpolate", "project"] = "interpolate"

    @model_validator(mode="after")
    def _check_time_step(self) -> "ModelParams":
        if self.dt >= self.dt_max:
            raise ValueError(f"dt={self.dt} must be below the configured ceiling dt_max={self.dt_max}")
        return self

    @property
    def num_steps(self) -> int:
        return int(round(self.T_end / self.dt))


class Sources(NamedTuple):
    gamma_phi: np.ndarray
    gamma_v: np.ndarray
    gamma_B: np.ndarray
    gamma_sigma: np.ndarray


class Materials(NamedTuple):
    m_phi: np.ndarray
    m_sigma: np.ndarray
    eta: np.ndarray
    tau: np.ndarray
    kappa: np.ndarray


def sources(phi, sigma, params: ModelParams) -> Sources:
    """Γ_φ = Pσ(1+φ), Γ_v = Γ_φ/4, Γ_B = ½GPσ(1+φ), Γ_σ = ½C(1+φ)"""
    phi = np.asarray(phi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    growth = params.P * sigma * (1.0 + phi)
    return Sources(
        gamma_phi=growth,
        gamma_v=0.25 * growth,
        gamma_B=0.5 * params.G_stress * growth,
        gamma_sigma=0.5 * params.C_consumption * (1.0 + phi) * np.ones_like(sigma),
    )


def kappa(phi, params: ModelParams):
    return 0.5 * (1.0 + np.asarray(phi, dtype=float)) * params.kappa_t


def kappa_prime(phi, params: ModelParams):
    return np.full_like(np.asarray(phi, dtype=float), 0.5 * params.kappa_t)


def mobilities_and_materials(phi, params: ModelParams) -> Materials:
    phi = np.asarray(phi, dtype=float)
    ones = np.ones_like(phi)
    return Materials(
        m_phi=0.5 * (1.0 + phi) ** 2 + MOBILITY_FLOOR,
        m_sigma=ones,
        eta=params.eta_bar * ones,
        tau=params.tau_bar * ones,
        kappa=kappa(phi, params),
    )


def psi(s):
    """二重井戸 ψ(s) = ¼(1 − s²)²"""
    s = np.asarray(s, dtype=float)
    return 0.25 * (1.0 - s * s) ** 2


def psi_prime(s):
    s = np.asarray(s, dtype=float)
    return s ** 3 - s


def psi_split(a, b):
    """
    凸凹分割 ψ_h′(a, b) = a³ − b と凸部分の2階微分 3a² を返します。
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a ** 3 - b, 3.0 * a * a


def kappa_quotient(a, b, params: ModelParams):
    """差分商 (κ(a) − κ(b))/(a − b)、|a − b| ≤ 1e-12 では κ′(a)"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = a - b
    close = np.abs(diff) <= 1e-12
    safe = np.where(close, 1.0, diff)
    quotient = (kappa(a, params) - kappa(b, params)) / safe
    return np.where(close, kappa_prime(a, params), quotient)


@dataclass(frozen=True)
class InitialData:
    """
    初期値と境界供給

    phi0: 点列 (N, 2) -> (N,)
    B0: 点列 -> (N, 2, 2)
    sigma_inf: (点列, 時刻) -> (N,)
    b0: B0 の最小固有値の下限
    """
    phi0: Callable[[np.ndarray], np.ndarray]
    B0: Callable[[np.ndarray], np.ndarray]
    sigma_inf: Callable[[np.ndarray, float], np.ndarray]
    b0: float = 1.0


def _identity_stress(points: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.eye(2), (points.shape[0], 2, 2)).copy()


def tumour_initial_data(eps: float) -> InitialData:
    """
    摂動した円形腫瘍の初期値

    φ₀ = −tanh(r/(√2ε)), r = |x| − (1 + 0.1 cos 2θ)、B₀ = I、σ_∞ = sin(π|x|/(10√2))
    """
    width = math.sqrt(2.0) * eps

    def phi0(points: np.ndarray) -> np.ndarray:
        radius = np.linalg.norm(points, axis=1)
        angle = np.arctan2(points[:, 1], points[:, 0])
        return -np.tanh((radius - (1.0 + 0.1 * np.cos(2.0 * angle))) / width)

    def sigma_inf(points: np.ndarray, time: float = 0.0) -> np.ndarray:
        return np.sin(math.pi * np.linalg.norm(points, axis=1) / (10.0 * math.sqrt(2.0)))

    return InitialData(phi0=phi0, B0=_identity_stress, sigma_inf=sigma_inf, b0=1.0)


@dataclass(frozen=True)
class InitialFields:
    phi: ScalarField
    B: MatrixField
    sigma_inf: Callable[[int], ScalarField]
    min_eigenvalue: float


def project_initial_stress(space: MatrixSpace, B0: Callable, dt: float) -> MatrixField:
    """
    ⟨B, G⟩_h + Δt⟨∇B, ∇G⟩ = ⟨B₀, G⟩_{L²} を成分ごとに解きます。
    """
    mesh = space.mesh
    scalar = space.scalar
    matrix = lumped_mass(scalar) + dt * stiffness_matrix(scalar)
    load = pack_symmetric(element_load(mesh, B0, quadrature_rule(mesh.dim, 3)))
    values = np.empty_like(load)
    for component in range(space.n_components):
        values[:, component], _ = solve_spd(matrix, load[:, component], tol=1e-12)
    return MatrixField(space, values)


def project_boundary_supply(
    space: ScalarSpace, sigma_inf: Callable, n: int, dt: float
) -> ScalarField:
    """
    境界L²射影した時間平均の σ_∞ を返します (内部頂点は0)。
    """
    mesh = space.mesh
    facets = mesh.boundary_facets
    nodes, weights = gauss_legendre_facet(2)
    taus, tau_weights = gauss_legendre_facet(2)
    start, stop = mesh.vertices[facets[:, 0]], mesh.vertices[facets[:, 1]]
    lengths = np.linalg.norm(stop - start, axis=1)
    load = np.zeros(space.dim)
    for s, w in zip(nodes, weights):
        points = (1.0 - s) * start + s * stop
        averaged = sum(
            tw * np.asarray(sigma_inf(points, (n - 1 + t) * dt), dtype=float)
            for t, tw in zip(taus, tau_weights)
        )
        np.add.at(load, facets[:, 0], w * lengths * (1.0 - s) * averaged)
        np.add.at(load, facets[:, 1], w * lengths * s * averaged)
    boundary = mesh.boundary_vertices
    matrix = boundary_mass(space, "all")[boundary][:, boundary]
    values = np.zeros(space.dim)
    values[boundary] = spsolve(matrix.tocsc(), load[boundary])
    return ScalarField(space, values)


def project_initial_phase(space: ScalarSpace, phi0: Callable) -> ScalarField:
    """集中L²射影 Q_h φ₀"""
    return lumped_project(space, phi0)


def supply_sampler(
    space: ScalarSpace, data: InitialData, params: ModelParams
) -> Callable[[int], ScalarField]:
    """時間レベル n の σ_∞,h^n を返す関数を作ります。"""
    if params.initial_method == "project":
        def sampler(n: int) -> ScalarField:
            return project_boundary_supply(space, data.sigma_inf, n, params.dt)
    else:
        def sampler(n: int) -> ScalarField:
            return interpolate_nodal(space, lambda x: data.sigma_inf(x, n * params.dt))
    return sampler


def build_initial_fields(
    scalar: ScalarSpace,
    matrix: MatrixSpace,
    data: InitialData,
    params: Optional[ModelParams] = None,
) -> InitialFields:
    """
    φ_h^0, B_h^0 と σ_∞ のサンプラーを構成します。

    Args:
        scalar: スカラー空間
        matrix: 行列空間
        data: 初期データ
        params: モデルパラメータ (initial_method と dt を参照)

    Returns:
        初期場

    Raises:
        SPDViolationError: B_h^0 がある頂点で正定値でない場合
    """
    params = params or ModelParams()
    if params.initial_method == "project":
        phi = project_initial_phase(scalar, data.phi0)
        B = project_initial_stress(matrix, data.B0, params.dt)
    else:
        phi = interpolate_nodal(scalar, data.phi0)
        B = interpolate_nodal(matrix, data.B0)

    eigen = min_eigenvalues(B.full())
    vertex = int(np.argmin(eigen))
    if eigen[vertex] <= 0.0:
        raise SPDViolationError(
            f"Initial stress is not positive definite at vertex {vertex}",
            float(eigen[vertex]),
            vertex=vertex,
        )
    if eigen[vertex] < data.b0 - 1e-12:
        logger.warning(
            f"Initial stress eigenvalue {eigen[vertex]:.6g} at vertex {vertex} is below b0={data.b0}"
        )
    return InitialFields(
        phi=phi,
        B=B,
        sigma_inf=supply_sampler(scalar, data, params),
        min_eigenvalue=float(eigen[vertex]),
    )
