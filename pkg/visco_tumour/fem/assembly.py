"""
有限要素行列・ベクトルの組み立て

要素ごとの局所行列をベクトル化して計算し、COO形式で全体行列へ足し込みます。
速度空間を含む積分は3次 (Taylor-Hood) または5次 (mini要素) の積分則で厳密に評価します。
"""
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional
import logging

import numpy as np
from scipy import sparse

from visco_tumour.fem.fespace import ScalarSpace, VelocitySpace
from visco_tumour.fem.mesh import DIRICHLET, NEUMANN
from visco_tumour.utils.errors import FieldError

# ロガーの設定
logger = logging.getLogger(__name__)

BOUNDARY_TAGS = {"all": None, "dirichlet": DIRICHLET, "neumann": NEUMANN}


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sparse.csr_matrix:
    """(Ne, n, m) の局所行列を全体行列へ足し込みます。"""
    r = np.broadcast_to(rows[:, :, None], local.shape)
    c = np.broadcast_to(cols[:, None, :], local.shape)
    return sparse.coo_matrix(
        (local.ravel(), (r.ravel(), c.ravel())), shape=shape
    ).tocsr()


def lumped_mass(space: ScalarSpace) -> sparse.csr_matrix:
    """集中質量行列 (対角成分は頂点重み)"""
    return sparse.diags(space.vertex_weights).tocsr()


def mass_matrix(space: ScalarSpace) -> sparse.csr_matrix:
    """P1の整合質量行列"""
    mesh = space.mesh
    n = mesh.dim + 1
    pattern = (np.ones((n, n)) + np.eye(n)) / ((mesh.dim + 1) * (mesh.dim + 2))
    local = mesh.volumes[:, None, None] * pattern[None, :, :]
    return _scatter(local, mesh.simplices, mesh.simplices, (space.dim, space.dim))


def stiffness_matrix(space: ScalarSpace, weight: Optional[np.ndarray] = None) -> sparse.csr_matrix:
    """
    剛性行列 ⟨w ∇η_j, ∇η_i⟩ を組み立てます。

    Args:
        space: スカラー空間
        weight: 頂点値で与える重み I_h[w] (省略時は1)

    Returns:
        対称な剛性行列
    """
    mesh = space.mesh
    grads = mesh.basis_gradients
    scale = mesh.volumes
    if weight is not None:
        weight = np.asarray(weight, dtype=float)
        if weight.shape != (space.dim,):
            raise FieldError(f"Stiffness weight has shape {weight.shape}, expected ({space.dim},)")
        scale = scale * weight[mesh.simplices].mean(axis=1)
    local = scale[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
    return _scatter(local, mesh.simplices, mesh.simplices, (space.dim, space.dim))


def boundary_mass(space: ScalarSpace, tag: str = "all") -> sparse.csr_matrix:
    """
    境界上の厳密なP1質量行列を組み立てます。

    Args:
        space: スカラー空間
        tag: "all", "dirichlet" または "neumann"

    Returns:
        境界質量行列 (対象の辺がなければ零行列)

    Raises:
        FieldError: 未知のタグの場合
    """
    if tag not in BOUNDARY_TAGS:
        raise FieldError(f"Unknown boundary tag '{tag}', expected one of {sorted(BOUNDARY_TAGS)}")
    mesh = space.mesh
    if mesh.dim != 2:
        raise FieldError("Boundary mass is implemented for triangle meshes")
    facets = mesh.boundary_facets
    selected = BOUNDARY_TAGS[tag]
    if selected is not None:
        facets = facets[mesh.facet_tags == selected]
    if facets.shape[0] == 0:
        return sparse.csr_matrix((space.dim, space.dim))
    lengths = np.linalg.norm(mesh.vertices[facets[:, 1]] - mesh.vertices[facets[:, 0]], axis=1)
    pattern = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    local = lengths[:, None, None] * pattern[None, :, :]
    return _scatter(local, facets, facets, (space.dim, space.dim))


@dataclass(frozen=True)
class VelocityIntegrals:
    """
    速度基底を含む要素積分の表

    volume: (Ne, nloc)        ∫_K φ_j
    with_hat: (Ne, 3, nloc)   ∫_K η_k φ_j
    with_grad: (Ne, 3, nloc, 2) ∫_K η_k ∂_b φ_j
    weights: (Ne, nq)         |K|·w_q
    gradients: (Ne, nq, nloc, 2)
    """
    volume: np.ndarray
    with_hat: np.ndarray
    with_grad: np.ndarray
    weights: np.ndarray
    gradients: np.ndarray


def velocity_integrals(space: VelocitySpace) -> VelocityIntegrals:
    rule = space.rule
    values, grads = space.tabulate(rule)
    weights = space.mesh.volumes[:, None] * rule.weights[None, :]
    lam = rule.points
    return VelocityIntegrals(
        volume=np.einsum("eq,qj->ej", weights, values),
        with_hat=np.einsum("eq,qk,qj->ekj", weights, lam, values),
        with_grad=np.einsum("eq,qk,eqjb->ekjb", weights, lam, grads),
        weights=weights,
        gradients=grads,
    )


def viscous_matrix(
    space: VelocitySpace, eta: float, integrals: Optional[VelocityIntegrals] = None
) -> sparse.csr_matrix:
    """2η⟨D(u), D(w)⟩ の行列"""
    integrals = integrals or velocity_integrals(space)
    w = integrals.weights
    g = integrals.gradients
    dofs = space.element_dofs
    n = space.n_scalar
    laplace = np.einsum("eq,eqib,eqjb->eij", w, g, g)
    blocks = []
    for a in range(2):
        for c in range(2):
            cross = np.einsum("eq,eqi,eqj->eij", w, g[..., c], g[..., a])
            local = eta * (cross + (laplace if a == c else 0.0))
            blocks.append(_scatter(local, dofs + a * n, dofs + c * n, (space.dim, space.dim)))
    return sum(blocks[1:], blocks[0]).tocsr()


def divergence_matrix(
    space: VelocitySpace, pressure: ScalarSpace, integrals: Optional[VelocityIntegrals] = None
) -> sparse.csr_matrix:
    """B[q, (a, j)] = ⟨∂_a φ_j, η_q⟩ (⟨div v, q⟩ の行列)"""
    if pressure.mesh is not space.mesh:
        raise FieldError("Velocity and pressure spaces live on different meshes")
    integrals = integrals or velocity_integrals(space)
    dofs = space.element_dofs
    simplices = space.mesh.simplices
    blocks = []
    for a in range(2):
        local = integrals.with_grad[:, :, :, a]
        blocks.append(_scatter(local, simplices, dofs + a * space.n_scalar, (pressure.dim, space.dim)))
    return (blocks[0] + blocks[1]).tocsr()


def _accumulate(space: VelocitySpace, contributions: np.ndarray) -> np.ndarray:
    """(Ne, 2, nloc) の要素寄与を全体ベクトルへ足し込みます。"""
    load = np.zeros((2, space.n_scalar))
    for a in range(2):
        np.add.at(load[a], space.element_dofs, contributions[:, a, :])
    return load.ravel()


def stress_divergence_load(
    space: VelocitySpace, integrals: VelocityIntegrals, stress: np.ndarray
) -> np.ndarray:
    """−⟨I_h T, ∇w⟩ (stress: (Nv, 2, 2) 頂点値)"""
    local_stress = stress[space.mesh.simplices]
    contributions = -np.einsum("ekab,ekjb->eaj", local_stress, integrals.with_grad)
    return _accumulate(space, contributions)


def gradient_weighted_load(
    space: VelocitySpace, integrals: VelocityIntegrals, scalar: np.ndarray, gradient: np.ndarray
) -> np.ndarray:
    """⟨s ∇g, w⟩ (s: P1頂点値, gradient: (Ne, 2) 要素ごとに一定)"""
    local = scalar[space.mesh.simplices]
    contributions = np.einsum("ea,ek,ekj->eaj", gradient, local, integrals.with_hat)
    return _accumulate(space, contributions)


def element_constant_load(
    space: VelocitySpace, integrals: VelocityIntegrals, force: np.ndarray
) -> np.ndarray:
    """⟨f, w⟩ (f: (Ne, 2) 要素ごとに一定)"""
    contributions = np.einsum("ea,ej->eaj", force, integrals.volume)
    return _accumulate(space, contributions)


def local_velocity(space: VelocitySpace, velocity: np.ndarray) -> np.ndarray:
    """(Ne, 2, nloc) 要素ごとの速度係数"""
    components = np.asarray(velocity, dtype=float).reshape(2, space.n_scalar)
    return np.transpose(components[:, space.element_dofs], (1, 0, 2))


def convection_vector(
    pressure: ScalarSpace,
    space: VelocitySpace,
    integrals: VelocityIntegrals,
    velocity: np.ndarray,
    gradient: np.ndarray,
) -> np.ndarray:
    """c_i = ⟨v·∇g, η_i⟩_{L²} (gradient: (Ne, 2) 要素ごとに一定)"""
    local_v = local_velocity(space, velocity)
    contributions = np.einsum("ea,eaj,eij->ei", gradient, local_v, integrals.with_hat)
    return np.bincount(
        pressure.mesh.simplices.ravel(), weights=contributions.ravel(), minlength=pressure.dim
    )


def element_velocity_integrals(
    space: VelocitySpace, integrals: VelocityIntegrals, velocity: np.ndarray
) -> np.ndarray:
    """(Ne, 2) ∫_K v_a"""
    return np.einsum("eaj,ej->ea", local_velocity(space, velocity), integrals.volume)


def hat_weighted_velocity_gradients(
    space: VelocitySpace, integrals: VelocityIntegrals, velocity: np.ndarray
) -> np.ndarray:
    """(Ne, 3, 2, 2) ∫_K η_k ∂_b v_a を [e, k, a, b] で返します。"""
    return np.einsum("eaj,ekjb->ekab", local_velocity(space, velocity), integrals.with_grad)


# 形式名 -> 組み立て関数
FORMS: Dict[str, Callable[..., Any]] = {
    "lumped_mass": lumped_mass,
    "mass": mass_matrix,
    "stiffness": stiffness_matrix,
    "boundary_mass": boundary_mass,
    "viscous": viscous_matrix,
    "divergence": divergence_matrix,
    "stress_divergence": stress_divergence_load,
    "gradient_weighted": gradient_weighted_load,
    "element_constant": element_constant_load,
    "convection": convection_vector,
}


def assemble(form: str, *spaces: Any, **coefficients: Any) -> Any:
    """
    名前で指定した形式を組み立てます。

    Args:
        form: FORMS のキー
        spaces: 形式に応じた空間 (および積分表)
        coefficients: 係数場

    Returns:
        疎行列またはベクトル

    Raises:
        FieldError: 未知の形式、または空間の組み合わせが不正な場合
    """
    builder = FORMS.get(form)
    if builder is None:
        raise FieldError(f"Unknown form '{form}', expected one of {sorted(FORMS)}")
    try:
        return builder(*spaces, **coefficients)
    except (AttributeError, TypeError) as e:
        raise FieldError(f"Incompatible arguments for form '{form}': {str(e)}") from e
