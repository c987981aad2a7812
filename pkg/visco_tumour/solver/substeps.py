"""
1時間ステップ内の部分問題

栄養素の方程式、線形化したCahn-Hilliard系、Stokes系、Oldroyd-B方程式を
それぞれ1回ずつ解く関数です。時間ステップ内で固定の量は StepContext にまとめます。
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple
import logging

import numpy as np
from scipy import sparse

from visco_tumour.fem.assembly import (
    convection_vector,
    element_constant_load,
    element_velocity_integrals,
    gradient_weighted_load,
    hat_weighted_velocity_gradients,
    stiffness_matrix,
    stress_divergence_load,
)
from visco_tumour.fem.fespace import MatrixField, ScalarField, VectorField, pack_symmetric
from visco_tumour.fem.tensorcalc import (
    ElementLambda,
    build_lambda_elements,
    eigh_symmetric,
    elastic_stress,
)
from visco_tumour.model import Materials, ModelParams, Sources, kappa_quotient, mobilities_and_materials, sources
from visco_tumour.solver.linear import IncompleteLU, solve_nonsymmetric, solve_spd
from visco_tumour.solver.operators import SchemeOperators
from visco_tumour.solver.state import FieldState, LinearSolveReport
from visco_tumour.utils.errors import SPDViolationError

# ロガーの設定
logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StepContext:
    """前の時間レベルから決まる、反復中は変わらない量"""
    ops: SchemeOperators
    prev: FieldState
    sigma: np.ndarray
    materials: Materials
    sources: Sources
    mobility_stiffness: sparse.csr_matrix
    kappa: np.ndarray
    grad_phi: np.ndarray
    grad_kappa: np.ndarray
    # Cahn-Hilliard の Jacobian の前処理 (時間ステップ内で共有)
    ch_factor: IncompleteLU = field(default_factory=IncompleteLU)

    @property
    def params(self) -> ModelParams:
        return self.ops.params


def step_context(ops: SchemeOperators, prev: FieldState, sigma: np.ndarray) -> StepContext:
    phi_old = prev.phi.values
    materials = mobilities_and_materials(phi_old, ops.params)
    return StepContext(
        ops=ops,
        prev=prev,
        sigma=np.asarray(sigma, dtype=float),
        materials=materials,
        sources=sources(phi_old, sigma, ops.params),
        mobility_stiffness=stiffness_matrix(ops.scalar, materials.m_phi),
        kappa=materials.kappa,
        grad_phi=ops.p1_gradients(phi_old),
        grad_kappa=ops.p1_gradients(materials.kappa),
    )


def solve_nutrient(
    ops: SchemeOperators, phi_old: np.ndarray, sigma_inf: ScalarField
) -> Tuple[ScalarField, LinearSolveReport]:
    """
    ⟨∇σ,∇ξ⟩ + ⟨σΓ_σ, ξ⟩_h + K⟨σ,ξ⟩_∂Ω = K⟨σ_∞,ξ⟩_∂Ω を解きます。

    Args:
        ops: 離散演算子
        phi_old: 前の時間レベルの φ (頂点値)
        sigma_inf: 境界供給 σ_∞,h

    Returns:
        (σ_h^n, 報告)

    Raises:
        LinearSolverError: 共役勾配法が収束しない場合
    """
    params = ops.params
    gamma_sigma = sources(phi_old, np.zeros_like(phi_old), params).gamma_sigma
    m_sigma = mobilities_and_materials(phi_old, params).m_sigma
    stiffness = ops.stiffness if np.all(m_sigma == 1.0) else stiffness_matrix(ops.scalar, m_sigma)
    matrix = (
        stiffness
        + sparse.diags(ops.weights * gamma_sigma)
        + params.K_boundary * ops.boundary
    )
    rhs = params.K_boundary * (ops.boundary @ sigma_inf.values)
    values, report = solve_spd(matrix, rhs, tol=params.cg_tol, label="nutrient")
    return ScalarField(ops.scalar, values), report


def ch_system(
    ctx: StepContext, phi: np.ndarray, mu: np.ndarray, velocity: np.ndarray, trace_B: np.ndarray
) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """
    Cahn-Hilliard部分系の近似Jacobianと残差 (右辺) を返します。

    未知量の並びは [δφ, δμ] です。
    """
    ops = ctx.ops
    params = ctx.params
    dt = params.dt
    w = ops.weights
    phi_old = ctx.prev.phi.values
    A = ops.stiffness
    A_m = ctx.mobility_stiffness
    scale = params.beta / params.eps

    convection = convection_vector(ops.pressure, ops.velocity, ops.integrals, velocity, ctx.grad_phi)
    growth = phi_old * ctx.sources.gamma_v - ctx.sources.gamma_phi
    r1 = -w * (phi - phi_old) - dt * (A_m @ mu) - dt * convection - dt * w * growth

    explicit = mu - scale * phi ** 3 + scale * phi_old + params.chi_phi * ctx.sigma
    explicit -= 0.5 * kappa_quotient(phi, phi_old, params) * trace_B
    r2 = w * explicit - params.beta * params.eps * (A @ phi)

    reaction = sparse.diags(scale * w * 3.0 * phi * phi)
    jacobian = sparse.bmat(
        [
            [ops.lumped, dt * A_m],
            [reaction + params.beta * params.eps * A, -ops.lumped],
        ],
        format="csr",
    )
    return jacobian, np.concatenate([r1, r2])


def ch_substep(
    ctx: StepContext, phi: np.ndarray, mu: np.ndarray, velocity: np.ndarray, B: MatrixField
) -> Tuple[np.ndarray, np.ndarray, LinearSolveReport]:
    """
    近似Newton法の1反復で (φ, μ) を更新します。

    Args:
        ctx: 時間ステップの文脈
        phi: φ^{n,ℓ−1}
        mu: μ^{n,ℓ−1}
        velocity: v^{n,ℓ−1} の係数
        B: B^{n,ℓ−1}

    Returns:
        (φ^{n,ℓ}, μ^{n,ℓ}, 報告)
    """
    trace_B = B.values[:, : B.space.mesh.dim].sum(axis=1)
    jacobian, rhs = ch_system(ctx, phi, mu, velocity, trace_B)
    increment, report = solve_nonsymmetric(
        jacobian, rhs, tol=ctx.params.bicgstab_tol, label="cahn_hilliard", reuse=ctx.ch_factor
    )
    n = phi.shape[0]
    return phi + increment[:n], mu + increment[n:], report


def element_lambda(ops: SchemeOperators, B: MatrixField) -> ElementLambda:
    """B の Λ (naive_lambda では要素平均の δ_ij B)"""
    mesh = ops.mesh
    vertex_matrices = B.full()[mesh.simplices]
    if not ops.params.naive_lambda:
        lam = build_lambda_elements(vertex_matrices, mesh.inverse_transposes)
        if lam.num_degenerate:
            logger.debug(f"Lambda used the degenerate branch on {lam.num_degenerate} element directions")
        return lam
    dim = mesh.dim
    mean = vertex_matrices.mean(axis=1)
    eye = np.eye(dim)
    full = np.einsum("ij,eab->eijab", eye, mean)
    hat = np.repeat(mean[:, None], dim, axis=1)
    transform = np.broadcast_to(np.einsum("ij,jm->ijm", eye, eye), (mesh.num_elements, dim, dim, dim))
    return ElementLambda(
        hat=hat,
        full=full,
        lambdas=np.full((mesh.num_elements, dim), np.nan),
        degenerate=np.zeros((mesh.num_elements, dim), dtype=bool),
        transform=np.array(transform),
        beta_ends=vertex_matrices,
    )


def stokes_load(
    ctx: StepContext, mu: np.ndarray, B: MatrixField, lam: ElementLambda
) -> Tuple[np.ndarray, np.ndarray]:
    """Stokes系の右辺 (全速度自由度) と拘束の右辺 ⟨Γ_v, q⟩_h"""
    ops = ctx.ops
    params = ctx.params
    space, integrals = ops.velocity, ops.integrals
    full_B = B.full()
    stress = elastic_stress(full_B, ctx.kappa)
    force = stress_divergence_load(space, integrals, stress)
    force += gradient_weighted_load(space, integrals, mu + params.chi_phi * ctx.sigma, ctx.grad_phi)
    if params.kappa_t != 0.0:
        trace_B = np.trace(full_B, axis1=-2, axis2=-1)
        force += element_constant_load(space, integrals, 0.5 * ops.p1_gradients(ctx.kappa * trace_B))
        trace_lambda = np.trace(lam.full, axis1=-2, axis2=-1)
        force += element_constant_load(
            space, integrals, -0.5 * np.einsum("eij,ej->ei", trace_lambda, ctx.grad_kappa)
        )
    constraint = ops.weights * ctx.sources.gamma_v
    return force, constraint


def stokes_substep(
    ctx: StepContext,
    mu: np.ndarray,
    B: MatrixField,
    lam: ElementLambda,
    guess: Optional[Tuple[VectorField, ScalarField]] = None,
) -> Tuple[VectorField, ScalarField, LinearSolveReport]:
    """
    (v^{n,ℓ}, p^{n,ℓ}) を鞍点系から求めます。Dirichlet自由度は0に固定します。

    guess には前の反復の (v, p) を渡せます。MINRES の初期値に使います。

    Raises:
        StokesSolveError: 鞍点ソルバーが収束しない場合
    """
    ops = ctx.ops
    force, constraint = stokes_load(ctx, mu, B, lam)
    free = ops.velocity.free_dofs
    x0 = None if guess is None else (guess[0].values[free], guess[1].values)
    v_free, pressure, report = ops.saddle.solve(force[free], constraint, x0=x0)
    velocity = np.zeros(ops.velocity.dim)
    velocity[free] = v_free
    return VectorField(ops.velocity, velocity), ScalarField(ops.pressure, pressure), report


def require_spd_vertices(B: MatrixField, label: str) -> np.ndarray:
    """頂点ごとの最小固有値を返し、正定値でなければ例外を送出します。"""
    values = eigh_symmetric(B.full())[0]
    smallest = values[:, 0]
    vertex = int(np.argmin(smallest))
    if smallest[vertex] <= 0.0:
        raise SPDViolationError(
            f"{label} is not positive definite at vertex {vertex} (eigenvalue {smallest[vertex]:.6g})",
            float(smallest[vertex]),
            vertex=vertex,
        )
    return values


def oldroyd_rhs(
    ctx: StepContext, velocity: VectorField, B: MatrixField, lam: ElementLambda
) -> np.ndarray:
    """
    Oldroyd-B方程式の右辺を頂点ごとの行列 (Nv, d, d) で返します。

    試験関数 η_k E に対する右辺は R_k : E です。
    """
    ops = ctx.ops
    params = ctx.params
    dt = params.dt
    w = ops.weights
    grads = ops.mesh.basis_gradients
    B_lag = B.full()
    B_old = ctx.prev.B.full()

    element_v = element_velocity_integrals(ops.velocity, ops.integrals, velocity.values)
    transport = ops.vertex_sum(np.einsum("ea,eka->ek", element_v, grads))
    lambda_term = ops.vertex_sum(np.einsum("ei,ekj,eijab->ekab", element_v, grads, lam.full))
    velocity_gradient = ops.vertex_sum(
        hat_weighted_velocity_gradients(ops.velocity, ops.integrals, velocity.values)
    )
    stress = elastic_stress(B_lag, ctx.kappa)

    rhs = w[:, None, None] * B_old
    rhs -= dt * transport[:, None, None] * B_lag
    rhs += dt * lambda_term
    rhs -= (dt / params.tau_bar) * w[:, None, None] * stress
    rhs -= dt * (w * ctx.sources.gamma_B)[:, None, None] * B_lag
    rhs += 2.0 * dt * velocity_gradient @ B_lag
    return rhs


def oldroyd_substep(
    ctx: StepContext, velocity: VectorField, B: MatrixField, lam: ElementLambda
) -> Tuple[MatrixField, LinearSolveReport]:
    """
    B^{n,ℓ} を成分ごとの対称正定値系 (集中質量 + Δtα 剛性) から求めます。

    Raises:
        SPDViolationError: 遅れた B^{n,ℓ−1} が正定値でない場合
        LinearSolverError: 共役勾配法が収束しない場合
    """
    ops = ctx.ops
    params = ctx.params
    eigenvalues = require_spd_vertices(B, "Lagged conformation tensor")
    rhs = pack_symmetric(oldroyd_rhs(ctx, velocity, B, lam))
    matrix = ops.stress_diffusion
    if params.relaxation_stabilization:
        shift = (params.dt / params.tau_bar) * ops.weights * (
            2.0 * eigenvalues[:, -1] + np.abs(ctx.kappa)
        )
        matrix = (matrix + sparse.diags(shift)).tocsr()
        rhs = rhs + shift[:, None] * B.values

    values = np.empty_like(rhs)
    reports = []
    for component in range(rhs.shape[1]):
        values[:, component], report = solve_spd(
            matrix, rhs[:, component], tol=params.cg_tol,
            x0=B.values[:, component], label=f"oldroyd[{component}]",
        )
        reports.append(report)
    worst = max(reports, key=lambda r: r.residual)
    summary = LinearSolveReport(
        "cg", sum(r.iterations for r in reports), worst.residual, params.cg_tol,
        all(r.converged for r in reports),
    )
    return MatrixField(ops.matrix, values), summary
