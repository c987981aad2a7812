"""
有限要素空間

スカラーP1空間 S_h、対称行列値P1空間 W_h、速度空間 V_h (Taylor-Hood P2 または mini要素) と、
節点補間・集中質量内積・集中L²射影を提供します。
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union
import logging

import numpy as np

from visco_tumour.fem.mesh import TriMesh
from visco_tumour.fem.quadrature import QuadratureRule, quadrature_rule
from visco_tumour.utils.errors import FieldError

# ロガーの設定
logger = logging.getLogger(__name__)

TAYLOR_HOOD = "taylor_hood"
MINI = "mini"
VELOCITY_VARIANTS = (TAYLOR_HOOD, MINI)


def symmetric_components(dim: int) -> int:
    return dim * (dim + 1) // 2


def component_pairs(dim: int):
    """対称行列の格納順 (対角成分, 次に上三角成分)"""
    diagonal = [(i, i) for i in range(dim)]
    upper = [(i, j) for i in range(dim) for j in range(i + 1, dim)]
    return diagonal + upper


def frobenius_weights(dim: int) -> np.ndarray:
    """格納成分に対するFrobenius内積の重み"""
    return np.array([1.0] * dim + [2.0] * (symmetric_components(dim) - dim))


def pack_symmetric(full: np.ndarray) -> np.ndarray:
    """(..., d, d) -> (..., d(d+1)/2) (対称部分を格納)"""
    full = np.asarray(full, dtype=float)
    dim = full.shape[-1]
    sym = 0.5 * (full + np.swapaxes(full, -1, -2))
    return np.stack([sym[..., i, j] for i, j in component_pairs(dim)], axis=-1)


def unpack_symmetric(packed: np.ndarray) -> np.ndarray:
    """(..., d(d+1)/2) -> (..., d, d)"""
    packed = np.asarray(packed, dtype=float)
    count = packed.shape[-1]
    dim = {3: 2, 6: 3}.get(count)
    if dim is None:
        raise FieldError(f"Cannot unpack {count} symmetric components")
    full = np.empty(packed.shape[:-1] + (dim, dim))
    for k, (i, j) in enumerate(component_pairs(dim)):
        full[..., i, j] = packed[..., k]
        full[..., j, i] = packed[..., k]
    return full


class ScalarSpace:
    """連続な区分的1次関数の空間 S_h"""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh

    @property
    def dim(self) -> int:
        return self.mesh.num_vertices

    @cached_property
    def dof_map(self) -> np.ndarray:
        return np.arange(self.mesh.num_vertices)

    @property
    def dof_points(self) -> np.ndarray:
        return self.mesh.vertices

    @cached_property
    def vertex_weights(self) -> np.ndarray:
        """頂点重み Σ_{K∋P} |K|/(d+1)"""
        mesh = self.mesh
        share = np.repeat(mesh.volumes / (mesh.dim + 1), mesh.dim + 1)
        return np.bincount(mesh.simplices.ravel(), weights=share, minlength=mesh.num_vertices)


class MatrixSpace:
    """対称行列値の区分的1次関数の空間 W_h (頂点ごとに d(d+1)/2 成分)"""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.scalar = ScalarSpace(mesh)

    @property
    def n_components(self) -> int:
        return symmetric_components(self.mesh.dim)

    @property
    def dim(self) -> int:
        return self.mesh.num_vertices * self.n_components

    @property
    def dof_points(self) -> np.ndarray:
        return self.mesh.vertices

    @property
    def vertex_weights(self) -> np.ndarray:
        return self.scalar.vertex_weights


class VelocitySpace:
    """
    ベクトル値速度空間 V_h

    スカラー節点は Taylor-Hood では頂点と辺中点、mini要素では頂点と要素バブルです。
    自由度は成分ごとにまとめて並べます: [v_1 の全節点, v_2 の全節点]。
    """

    def __init__(self, mesh: TriMesh, variant: str = TAYLOR_HOOD):
        if variant not in VELOCITY_VARIANTS:
            raise FieldError(f"Unknown velocity element '{variant}', expected {VELOCITY_VARIANTS}")
        if mesh.dim != 2:
            raise FieldError("Velocity spaces are implemented for triangles only")
        self.mesh = mesh
        self.variant = variant

    @property
    def quadrature_degree(self) -> int:
        return 3 if self.variant == TAYLOR_HOOD else 5

    @cached_property
    def rule(self) -> QuadratureRule:
        return quadrature_rule(self.mesh.dim, self.quadrature_degree)

    @cached_property
    def n_scalar(self) -> int:
        mesh = self.mesh
        if self.variant == TAYLOR_HOOD:
            return mesh.num_vertices + mesh.edges[0].shape[0]
        return mesh.num_vertices + mesh.num_elements

    @property
    def dim(self) -> int:
        return self.mesh.dim * self.n_scalar

    @cached_property
    def element_dofs(self) -> np.ndarray:
        """(Ne, nloc) 要素の局所スカラー節点 → 全体スカラー節点"""
        mesh = self.mesh
        if self.variant == TAYLOR_HOOD:
            return np.hstack([mesh.simplices, mesh.num_vertices + mesh.edges[1]])
        bubbles = mesh.num_vertices + np.arange(mesh.num_elements)
        return np.hstack([mesh.simplices, bubbles[:, None]])

    @cached_property
    def dof_points(self) -> np.ndarray:
        mesh = self.mesh
        if self.variant == TAYLOR_HOOD:
            extra = mesh.vertices[mesh.edges[0]].mean(axis=1)
        else:
            extra = mesh.vertices[mesh.simplices].mean(axis=1)
        return np.vstack([mesh.vertices, extra])

    @cached_property
    def dirichlet_scalar_nodes(self) -> np.ndarray:
        mesh = self.mesh
        nodes = [mesh.dirichlet_vertices]
        if self.variant == TAYLOR_HOOD and mesh.dirichlet_facets.size:
            edges = mesh.edges[0]
            lookup = {tuple(edge): k for k, edge in enumerate(edges)}
            facets = np.sort(mesh.dirichlet_facets, axis=1)
            nodes.append(mesh.num_vertices + np.array([lookup[tuple(f)] for f in facets]))
        return np.unique(np.concatenate(nodes)).astype(np.int64)

    @cached_property
    def dirichlet_dofs(self) -> np.ndarray:
        nodes = self.dirichlet_scalar_nodes
        return np.concatenate([nodes + c * self.n_scalar for c in range(self.mesh.dim)])

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.dim, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    def tabulate(self, rule: Optional[QuadratureRule] = None):
        """
        積分点での基底関数値と勾配を返します。

        Returns:
            values: (nq, nloc) 参照要素上の値
            gradients: (Ne, nq, nloc, 2) 物理要素上の勾配
        """
        rule = rule or self.rule
        lam = rule.points
        grad_lam = self.mesh.basis_gradients
        nq = lam.shape[0]
        ne = self.mesh.num_elements
        if self.variant == TAYLOR_HOOD:
            pairs = [(1, 2), (2, 0), (0, 1)]
            values = np.empty((nq, 6))
            grads = np.empty((ne, nq, 6, 2))
            for k in range(3):
                values[:, k] = lam[:, k] * (2.0 * lam[:, k] - 1.0)
                grads[:, :, k, :] = (4.0 * lam[:, k] - 1.0)[None, :, None] * grad_lam[:, None, k, :]
            for k, (a, b) in enumerate(pairs):
                values[:, 3 + k] = 4.0 * lam[:, a] * lam[:, b]
                grads[:, :, 3 + k, :] = 4.0 * (
                    lam[None, :, b, None] * grad_lam[:, None, a, :]
                    + lam[None, :, a, None] * grad_lam[:, None, b, :]
                )
            return values, grads
        values = np.empty((nq, 4))
        grads = np.empty((ne, nq, 4, 2))
        values[:, :3] = lam
        grads[:, :, :3, :] = np.broadcast_to(grad_lam[:, None, :, :], (ne, nq, 3, 2))
        values[:, 3] = 27.0 * lam[:, 0] * lam[:, 1] * lam[:, 2]
        grads[:, :, 3, :] = 27.0 * (
            (lam[:, 1] * lam[:, 2])[None, :, None] * grad_lam[:, None, 0, :]
            + (lam[:, 0] * lam[:, 2])[None, :, None] * grad_lam[:, None, 1, :]
            + (lam[:, 0] * lam[:, 1])[None, :, None] * grad_lam[:, None, 2, :]
        )
        return values, grads


Space = Union[ScalarSpace, MatrixSpace, VelocitySpace]


@dataclass(frozen=True, eq=False)
class ScalarField:
    space: ScalarSpace
    values: np.ndarray

    def __post_init__(self):
        _check_length(self.values, (self.space.dim,))


@dataclass(frozen=True, eq=False)
class MatrixField:
    """values: (Nv, d(d+1)/2) 格納成分"""
    space: MatrixSpace
    values: np.ndarray

    def __post_init__(self):
        _check_length(self.values, (self.space.mesh.num_vertices, self.space.n_components))

    def full(self) -> np.ndarray:
        return unpack_symmetric(self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """values: 成分ごとにまとめた係数 (d·n_scalar,)"""
    space: VelocitySpace
    values: np.ndarray

    def __post_init__(self):
        _check_length(self.values, (self.space.dim,))

    def components(self) -> np.ndarray:
        return self.values.reshape(self.space.mesh.dim, self.space.n_scalar)

    def vertex_values(self) -> np.ndarray:
        """(Nv, d) 頂点での値"""
        return self.components()[:, : self.space.mesh.num_vertices].T


Field = Union[ScalarField, MatrixField, VectorField]


def _check_length(values: np.ndarray, shape) -> None:
    if np.shape(values) != tuple(shape):
        raise FieldError(f"Coefficient array has shape {np.shape(values)}, expected {tuple(shape)}")


def interpolate_nodal(space: Space, function: Callable[[np.ndarray], np.ndarray]) -> Field:
    """
    節点補間 I_h を行います。

    Args:
        space: 補間先の空間
        function: 点列 (N, d) を受け取るベクトル化された関数。
            スカラー空間は (N,)、行列空間は (N, d, d)、速度空間は (N, d) を返します。

    Returns:
        節点値が関数値と一致する場

    Raises:
        FieldError: 節点で関数値が有限でない場合
    """
    points = space.dof_points
    if isinstance(space, MatrixSpace):
        shape = (points.shape[0], space.mesh.dim, space.mesh.dim)
    elif isinstance(space, VelocitySpace):
        shape = (points.shape[0], space.mesh.dim)
    else:
        shape = (points.shape[0],)
    values = np.broadcast_to(np.asarray(function(points), dtype=float), shape)
    bad = ~np.isfinite(values.reshape(shape[0], -1)).all(axis=1)
    if bad.any():
        node = int(np.flatnonzero(bad)[0])
        raise FieldError(
            f"Non-finite function value at node {node} ({points[node].tolist()})",
            {"node": node},
        )

    if isinstance(space, ScalarSpace):
        return ScalarField(space, values.copy())
    if isinstance(space, MatrixSpace):
        return MatrixField(space, pack_symmetric(values))
    if isinstance(space, VelocitySpace):
        nv = space.mesh.num_vertices
        nodal = values.copy()
        if space.variant == MINI:
            # バブル係数 = 重心での値 − P1補間の重心値
            vertex_mean = nodal[space.mesh.simplices].mean(axis=1)
            nodal[nv:] -= vertex_mean
        return VectorField(space, nodal.T.ravel())
    raise FieldError(f"Unsupported space {type(space).__name__}")


def lumped_inner(f: Field, g: Field) -> float:
    """
    集中質量内積 ⟨f, g⟩_h = Σ_P w_P f(P)·g(P) を返します。

    Raises:
        FieldError: 空間が異なる場合
    """
    if f.space is not g.space:
        raise FieldError("Lumped inner product requires fields on the same space")
    if isinstance(f, ScalarField):
        return float(np.dot(f.space.vertex_weights, f.values * g.values))
    if isinstance(f, MatrixField):
        weights = frobenius_weights(f.space.mesh.dim)
        pointwise = (f.values * g.values) @ weights
        return float(np.dot(f.space.vertex_weights, pointwise))
    raise FieldError(f"Lumped inner product is not defined on {type(f.space).__name__}")


def element_load(
    mesh: TriMesh, source: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule
) -> np.ndarray:
    """
    ⟨source, η_i⟩_{L²} をP1基底ごとに積分します。

    Returns:
        (Nv, ...) 負荷ベクトル (sourceの値の形に従う)
    """
    corners = mesh.vertices[mesh.simplices]
    points = np.einsum("qk,ekd->eqd", rule.points, corners)
    flat = points.reshape(-1, mesh.dim)
    values = np.asarray(source(flat), dtype=float)
    values = values.reshape((mesh.num_elements, rule.num_points) + values.shape[1:])
    scale = mesh.volumes[:, None] * rule.weights[None, :]
    contributions = np.einsum("eq,qk,eq...->ek...", scale, rule.points, values)
    load = np.zeros((mesh.num_vertices,) + contributions.shape[2:])
    np.add.at(load, mesh.simplices, contributions)
    return load


def lumped_project(
    space: Union[ScalarSpace, MatrixSpace],
    source: Callable[[np.ndarray], np.ndarray],
    rule: Optional[QuadratureRule] = None,
) -> Field:
    """
    集中L²射影 Q_h を計算します: ⟨Q_h s, ζ⟩_h = ⟨s, ζ⟩_{L²}。

    Args:
        space: 射影先 (スカラーまたは行列空間)
        source: ベクトル化された被積分関数
        rule: 要素積分則 (既定は3次)

    Returns:
        射影された場
    """
    mesh = space.mesh
    rule = rule or quadrature_rule(mesh.dim, 3)
    weights = space.vertex_weights
    if np.any(weights <= 0.0):
        raise FieldError("Zero vertex weight encountered in lumped projection")
    load = element_load(mesh, source, rule)
    if isinstance(space, ScalarSpace):
        return ScalarField(space, load / weights)
    packed = pack_symmetric(load)
    return MatrixField(space, packed / weights[:, None])


def zero_field(space: Space) -> Field:
    if isinstance(space, ScalarSpace):
        return ScalarField(space, np.zeros(space.dim))
    if isinstance(space, MatrixSpace):
        return MatrixField(space, np.zeros((space.mesh.num_vertices, space.n_components)))
    return VectorField(space, np.zeros(space.dim))


def identity_field(space: MatrixSpace) -> MatrixField:
    values = np.zeros((space.mesh.num_vertices, space.n_components))
    values[:, : space.mesh.dim] = 1.0
    return MatrixField(space, values)
