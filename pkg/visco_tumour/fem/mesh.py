"""
構造化三角形メッシュ

軸平行な矩形領域上の直角二等辺三角形メッシュを生成し、
斜辺の二分割 (newest-vertex bisection) による界面近傍の細分化、
要素ごとのアフィン写像、境界辺のDirichlet/Neumann分類を提供します。

すべての三角形は頂点0が直角頂点、(1, 2) が斜辺となる向き (反時計回り) で格納されます。
二分割の子も直角二等辺三角形になるため、細分化後も鈍角は生じません。
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple
import logging
import math

import numpy as np
from scipy import sparse

from visco_tumour.utils.errors import FieldError, MeshError

# ロガーの設定
logger = logging.getLogger(__name__)

DIRICHLET = 1
NEUMANN = 2

# 境界辺の名前 -> (法線方向の軸, 0=下限側 / 1=上限側)
SIDES = {"xmin": (0, 0), "xmax": (0, 1), "ymin": (1, 0), "ymax": (1, 1)}

# 頂点座標を整数格子に丸める際の分解能
_KEY_RESOLUTION = 2 ** 20

ElementCode = Tuple[int, ...]


@dataclass(frozen=True)
class BoundarySegment:
    """境界辺上の軸平行なDirichlet区間 (lower/upperがNoneなら辺全体)"""
    side: str
    lower: Optional[float] = None
    upper: Optional[float] = None


@dataclass(frozen=True)
class StructuredLayout:
    """基礎格子の記述"""
    lower: Tuple[float, float]
    upper: Tuple[float, float]
    n_per_axis: int
    dirichlet: Tuple[BoundarySegment, ...] = ()

    @property
    def spacing(self) -> Tuple[float, float]:
        n = self.n_per_axis
        return (
            (self.upper[0] - self.lower[0]) / n,
            (self.upper[1] - self.lower[1]) / n,
        )

    @property
    def area(self) -> float:
        return (self.upper[0] - self.lower[0]) * (self.upper[1] - self.lower[1])

    @property
    def coarse_leg(self) -> float:
        return max(self.spacing)

    @property
    def has_square_cells(self) -> bool:
        hx, hy = self.spacing
        return abs(hx - hy) <= 1e-12 * max(hx, hy)


@dataclass(frozen=True)
class AffineMap:
    """参照単体から要素への写像 x = origin + matrix @ x_hat"""
    origin: np.ndarray
    matrix: np.ndarray
    inverse_transpose: np.ndarray

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    def to_physical(self, reference_points: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(reference_points, dtype=float) @ self.matrix.T

    def to_reference(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.origin) @ self.inverse_transpose


@dataclass(frozen=True, eq=False)
class TriMesh:
    """
    不変な単体メッシュ

    vertices: (Nv, d) 座標
    simplices: (Ne, d+1) 頂点番号 (正の向き)
    boundary_facets: (Nb, d) 境界辺の頂点番号
    facet_tags: (Nb,) DIRICHLET または NEUMANN
    element_diameters: (Ne,) 最長辺の長さ
    level: (Ne,) 二分割の世代
    codes: 要素ごとの細分化コード (基礎要素番号, 子ビット...)
    """
    vertices: np.ndarray
    simplices: np.ndarray
    boundary_facets: np.ndarray
    facet_tags: np.ndarray
    element_diameters: np.ndarray
    level: np.ndarray
    codes: Tuple[ElementCode, ...]
    layout: Optional[StructuredLayout] = field(default=None)

    @property
    def dim(self) -> int:
        return int(self.vertices.shape[1])

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_elements(self) -> int:
        return int(self.simplices.shape[0])

    @cached_property
    def jacobians(self) -> np.ndarray:
        """(Ne, d, d) 列が P_m − P_0 の行列 A_K"""
        corners = self.vertices[self.simplices]
        return np.transpose(corners[:, 1:, :] - corners[:, :1, :], (0, 2, 1))

    @cached_property
    def determinants(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(self.determinants) / math.factorial(self.dim)

    @cached_property
    def inverse_transposes(self) -> np.ndarray:
        return np.transpose(np.linalg.inv(self.jacobians), (0, 2, 1))

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(Ne, d+1, d) 要素上で一定なP1基底関数の勾配"""
        inv_t = self.inverse_transposes
        tail = np.transpose(inv_t, (0, 2, 1))
        head = -tail.sum(axis=1, keepdims=True)
        return np.concatenate([head, tail], axis=1)

    @cached_property
    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        一意な辺 (Nedge, 2) と要素→辺の対応 (Ne, 3) を返します。
        局所辺kは局所頂点kの対辺です。
        """
        if self.dim != 2:
            raise MeshError("Edge numbering is only available for triangles")
        local = np.array([[1, 2], [2, 0], [0, 1]])
        all_edges = np.sort(self.simplices[:, local], axis=2).reshape(-1, 2)
        unique, inverse = np.unique(all_edges, axis=0, return_inverse=True)
        return unique, inverse.reshape(-1, 3)

    @cached_property
    def vertex_keys(self) -> Tuple[Tuple[int, ...], ...]:
        """格子間隔を単位とした整数座標キー"""
        if self.layout is None:
            origin = self.vertices.min(axis=0)
            scale = np.ptp(self.vertices, axis=0)
        else:
            origin = np.asarray(self.layout.lower)
            scale = np.asarray(self.layout.spacing)
        scaled = np.rint((self.vertices - origin) / scale * _KEY_RESOLUTION).astype(np.int64)
        return tuple(map(tuple, scaled))

    @property
    def dirichlet_facets(self) -> np.ndarray:
        return self.boundary_facets[self.facet_tags == DIRICHLET]

    @cached_property
    def dirichlet_vertices(self) -> np.ndarray:
        return np.unique(self.dirichlet_facets.ravel())

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_facets.ravel())

    @cached_property
    def vertex_to_element(self) -> sparse.csr_matrix:
        """(Nv, Ne) 頂点と要素の接続行列"""
        rows = self.simplices.ravel()
        cols = np.repeat(np.arange(self.num_elements), self.dim + 1)
        data = np.ones(rows.shape[0], dtype=np.int8)
        return sparse.coo_matrix(
            (data, (rows, cols)), shape=(self.num_vertices, self.num_elements)
        ).tocsr()

    def max_angle(self) -> float:
        """全要素の最大内角 (ラジアン, 2次元のみ)"""
        corners = self.vertices[self.simplices]
        worst = 0.0
        for k in range(3):
            a = corners[:, (k + 1) % 3] - corners[:, k]
            b = corners[:, (k + 2) % 3] - corners[:, k]
            cosine = np.einsum("ed,ed->e", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            worst = max(worst, float(np.arccos(np.clip(cosine, -1.0, 1.0)).max()))
        return worst

    def gradient_products(self) -> np.ndarray:
        """(Ne, d+1, d+1) 無次元化した ∇η_i·∇η_j · h_K²"""
        grads = self.basis_gradients
        products = np.einsum("eid,ejd->eij", grads, grads)
        return products * self.element_diameters[:, None, None] ** 2


def affine_map(mesh: TriMesh, element_id: int) -> AffineMap:
    """
    要素のアフィン写像を返します。

    Args:
        mesh: メッシュ
        element_id: 要素番号

    Returns:
        参照頂点0を P_0 に、参照基底ベクトルを辺ベクトル P_m − P_0 に写す写像

    Raises:
        MeshError: 要素番号が範囲外の場合
    """
    if not 0 <= element_id < mesh.num_elements:
        raise MeshError(f"Element id {element_id} out of range [0, {mesh.num_elements})")
    origin = mesh.vertices[mesh.simplices[element_id, 0]].copy()
    return AffineMap(
        origin=origin,
        matrix=mesh.jacobians[element_id].copy(),
        inverse_transpose=mesh.inverse_transposes[element_id].copy(),
    )


def check_non_obtuse(mesh: TriMesh, slack: float = 1e-12) -> None:
    """
    全ての内角が直角以下であることを確認します。

    Raises:
        MeshError: 鈍角の要素が存在する場合
    """
    worst = mesh.max_angle()
    if worst > 0.5 * math.pi + slack:
        raise MeshError(
            f"Mesh has an obtuse angle of {math.degrees(worst):.6f} degrees",
            {"max_angle": worst},
        )


def _validate_segments(
    segments: Iterable[BoundarySegment], lower: np.ndarray, upper: np.ndarray, n: int
) -> Tuple[BoundarySegment, ...]:
    validated = []
    spacing = (upper - lower) / n
    for segment in segments:
        if segment.side not in SIDES:
            raise MeshError(
                f"Unknown boundary side '{segment.side}', expected one of {sorted(SIDES)}"
            )
        normal_axis, _ = SIDES[segment.side]
        axis = 1 - normal_axis
        start = lower[axis] if segment.lower is None else float(segment.lower)
        stop = upper[axis] if segment.upper is None else float(segment.upper)
        tol = 1e-9 * spacing[axis]
        if not lower[axis] - tol <= start < stop <= upper[axis] + tol:
            raise MeshError(
                f"Dirichlet segment on '{segment.side}' [{start}, {stop}] is outside the boundary"
            )
        for endpoint in (start, stop):
            cells = (endpoint - lower[axis]) / spacing[axis]
            if abs(cells - round(cells)) > 1e-9:
                raise MeshError(
                    f"Dirichlet segment endpoint {endpoint} on '{segment.side}' "
                    f"is not resolved by mesh facets (spacing {spacing[axis]})"
                )
        validated.append(BoundarySegment(segment.side, start, stop))
    return tuple(validated)


def _tag_facets(
    vertices: np.ndarray, facets: np.ndarray, layout: StructuredLayout
) -> np.ndarray:
    tags = np.full(facets.shape[0], NEUMANN, dtype=np.int8)
    if facets.shape[0] == 0:
        return tags
    midpoints = vertices[facets].mean(axis=1)
    spacing = layout.spacing
    for segment in layout.dirichlet:
        normal_axis, upper_side = SIDES[segment.side]
        axis = 1 - normal_axis
        bound = layout.upper[normal_axis] if upper_side else layout.lower[normal_axis]
        on_side = np.abs(midpoints[:, normal_axis] - bound) <= 1e-9 * spacing[normal_axis]
        inside = (midpoints[:, axis] >= segment.lower) & (midpoints[:, axis] <= segment.upper)
        tags[on_side & inside] = DIRICHLET
    return tags


def _edge_key(a: int, b: int) -> Tuple[int, int]:
    return (a, b) if a < b else (b, a)


class _BisectionForest:
    """
    基礎格子から始まる二分割の森

    葉要素を細分化コードで管理し、斜辺を共有する隣接要素の再帰的な
    二分割で適合性を保ちます。
    """

    def __init__(self, layout: StructuredLayout):
        self.layout = layout
        n = layout.n_per_axis
        hx, hy = layout.spacing
        lx, ly = layout.lower
        self._coords: List[Tuple[float, float]] = [
            (lx + i * hx, ly + j * hy) for j in range(n + 1) for i in range(n + 1)
        ]
        self._midpoints: Dict[Tuple[int, int], int] = {}
        self._leaves: Dict[ElementCode, Tuple[int, int, int]] = {}
        self._edges: Dict[Tuple[int, int], Set[ElementCode]] = {}

        def vid(i: int, j: int) -> int:
            return j * (n + 1) + i

        for j in range(n):
            for i in range(n):
                cell = j * n + i
                v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
                self._add((2 * cell,), (v10, v11, v00))
                self._add((2 * cell + 1,), (v01, v00, v11))

    @property
    def leaves(self) -> Dict[ElementCode, Tuple[int, int, int]]:
        return self._leaves

    def _add(self, code: ElementCode, triangle: Tuple[int, int, int]) -> None:
        self._leaves[code] = triangle
        a, b, c = triangle
        for edge in (_edge_key(a, b), _edge_key(b, c), _edge_key(c, a)):
            self._edges.setdefault(edge, set()).add(code)

    def _remove(self, code: ElementCode) -> Tuple[int, int, int]:
        triangle = self._leaves.pop(code)
        a, b, c = triangle
        for edge in (_edge_key(a, b), _edge_key(b, c), _edge_key(c, a)):
            owners = self._edges[edge]
            owners.discard(code)
            if not owners:
                del self._edges[edge]
        return triangle

    def _midpoint(self, p: int, q: int) -> int:
        key = _edge_key(p, q)
        index = self._midpoints.get(key)
        if index is None:
            (px, py), (qx, qy) = self._coords[p], self._coords[q]
            index = len(self._coords)
            self._coords.append((0.5 * (px + qx), 0.5 * (py + qy)))
            self._midpoints[key] = index
        return index

    def _split(self, code: ElementCode) -> None:
        apex, p, q = self._remove(code)
        m = self._midpoint(p, q)
        self._add(code + (0,), (m, apex, p))
        self._add(code + (1,), (m, q, apex))

    def diameter(self, code: ElementCode) -> float:
        _, p, q = self._leaves[code]
        (px, py), (qx, qy) = self._coords[p], self._coords[q]
        return math.hypot(px - qx, py - qy)

    def refine(self, code: ElementCode) -> None:
        """葉を二分割し、必要な隣接要素の閉包細分化も行います。"""
        stack = [code]
        limit = 4 * (len(code) + 64)
        while stack:
            if len(stack) > limit:
                raise MeshError(f"Bisection closure did not terminate for element {code}")
            current = stack[-1]
            if current not in self._leaves:
                stack.pop()
                continue
            _, p, q = self._leaves[current]
            hypotenuse = _edge_key(p, q)
            neighbours = self._edges[hypotenuse] - {current}
            if not neighbours:
                self._split(current)
                stack.pop()
                continue
            (neighbour,) = neighbours
            _, np_, nq = self._leaves[neighbour]
            if _edge_key(np_, nq) == hypotenuse:
                self._split(current)
                self._split(neighbour)
                stack.pop()
            else:
                stack.append(neighbour)

    def to_mesh(self) -> TriMesh:
        codes = tuple(sorted(self._leaves))
        simplices = np.array([self._leaves[c] for c in codes], dtype=np.int64)
        vertices = np.array(self._coords, dtype=float)
        facets = np.array(
            sorted(edge for edge, owners in self._edges.items() if len(owners) == 1),
            dtype=np.int64,
        ).reshape(-1, 2)
        hyp = vertices[simplices[:, 1]] - vertices[simplices[:, 2]]
        return TriMesh(
            vertices=vertices,
            simplices=simplices,
            boundary_facets=facets,
            facet_tags=_tag_facets(vertices, facets, self.layout),
            element_diameters=np.linalg.norm(hyp, axis=1),
            level=np.array([len(c) - 1 for c in codes], dtype=np.int64),
            codes=codes,
            layout=self.layout,
        )


def build_structured(
    lower: Sequence[float],
    upper: Sequence[float],
    n_per_axis: int,
    dirichlet: Iterable[BoundarySegment] = (),
) -> TriMesh:
    """
    矩形領域を n×n のセルに分割し、各セルを (+1,+1) 方向の対角線で2つの直角三角形に分けます。

    Args:
        lower: 領域の下限座標
        upper: 領域の上限座標
        n_per_axis: 各軸のセル数
        dirichlet: Dirichlet境界区間

    Returns:
        2n² 個の三角形からなるメッシュ

    Raises:
        MeshError: 領域が退化している場合、または境界区間がメッシュ辺で表せない場合
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != (2,) or hi.shape != (2,):
        raise MeshError("Only two-dimensional boxes are supported")
    if int(n_per_axis) != n_per_axis or n_per_axis < 1:
        raise MeshError(f"n_per_axis must be a positive integer, got {n_per_axis}")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
        raise MeshError(f"Degenerate box: lower={lo.tolist()}, upper={hi.tolist()}")
    n = int(n_per_axis)
    layout = StructuredLayout(
        lower=(float(lo[0]), float(lo[1])),
        upper=(float(hi[0]), float(hi[1])),
        n_per_axis=n,
        dirichlet=_validate_segments(dirichlet, lo, hi, n),
    )
    mesh = _BisectionForest(layout).to_mesh()
    logger.debug(f"Built structured mesh: {mesh.num_vertices} vertices, {mesh.num_elements} triangles")
    return mesh


def default_indicator_threshold(eps: float) -> float:
    """界面プロファイルの勾配に対する1%の閾値"""
    return 0.01 * 2.0 / (math.sqrt(2.0) * eps)


def gradient_indicator(mesh: TriMesh, phi: np.ndarray) -> np.ndarray:
    """要素ごとの |∇φ_h| (P1なので要素上で一定)"""
    values = np.asarray(getattr(phi, "values", phi), dtype=float)
    if values.shape != (mesh.num_vertices,):
        raise FieldError(
            f"Indicator field has shape {values.shape}, expected ({mesh.num_vertices},)"
        )
    grads = np.einsum("ekd,ek->ed", mesh.basis_gradients, values[mesh.simplices])
    return np.linalg.norm(grads, axis=1)


def marked_codes(
    mesh: TriMesh, phi: np.ndarray, indicator_threshold: float, buffer_layers: int = 1
) -> FrozenSet[ElementCode]:
    """
    指標が閾値を超える要素 (頂点隣接で buffer_layers 層だけ拡張) のコードを返します。
    """
    flagged = gradient_indicator(mesh, phi) > indicator_threshold
    for _ in range(buffer_layers):
        touched = np.zeros(mesh.num_vertices, dtype=bool)
        touched[mesh.simplices[flagged].ravel()] = True
        flagged = touched[mesh.simplices].any(axis=1)
    return frozenset(mesh.codes[i] for i in np.flatnonzero(flagged))


def refine_near_interface(
    mesh: TriMesh,
    phi: np.ndarray,
    target_h: float,
    indicator_threshold: float,
    retain: Iterable[ElementCode] = (),
    buffer_layers: int = 1,
) -> TriMesh:
    """
    界面近傍の要素を h_K ≤ target_h まで細分化したメッシュを基礎格子から再生成します。

    界面から離れた要素は基礎格子の粗さに戻ります。同じ入力に対して結果は常に同一です。

    Args:
        mesh: 現在のメッシュ (φの定義域)
        phi: 頂点値
        target_h: 界面近傍の目標要素径
        indicator_threshold: 勾配指標の閾値
        retain: 粗視化を遅らせるために保持する要素コード
        buffer_layers: 印付け領域の拡張層数

    Returns:
        適合かつ非鈍角のメッシュ

    Raises:
        MeshError: 細分化で鈍角が生じる場合 (セルが正方形でない場合)
    """
    if not target_h > 0:
        raise MeshError(f"target_h must be positive, got {target_h}")
    layout = mesh.layout
    if layout is None:
        raise MeshError("Refinement requires a mesh built from a structured layout")
    if not layout.has_square_cells:
        raise MeshError(
            "Refinement would violate non-obtuseness: base cells are not square",
            {"spacing": list(layout.spacing)},
        )

    marked = set(marked_codes(mesh, phi, indicator_threshold, buffer_layers))
    marked.update(tuple(code) for code in retain)
    ancestors = {code[:k] for code in marked for k in range(1, len(code) + 1)}
    forest = _BisectionForest(layout)
    threshold = target_h * (1.0 + 1e-9)

    def wanted(code: ElementCode) -> bool:
        if forest.diameter(code) <= threshold:
            return False
        if code in ancestors:
            return True
        return any(code[:k] in marked for k in range(1, len(code)))

    passes = 0
    while True:
        pending = [code for code in sorted(forest.leaves) if wanted(code)]
        if not pending:
            break
        passes += 1
        for code in pending:
            forest.refine(code)

    refined = forest.to_mesh()
    check_non_obtuse(refined)
    logger.debug(
        f"Refined mesh in {passes} passes: {refined.num_elements} triangles, "
        f"h_min={refined.element_diameters.min():.6g}"
    )
    return refined


def _barycentric(corners: np.ndarray, point: np.ndarray) -> np.ndarray:
    matrix = (corners[1:] - corners[0]).T
    tail = np.linalg.solve(matrix, point - corners[0])
    return np.concatenate([[1.0 - tail.sum()], tail])


def transfer_vertex_values(old: TriMesh, new: TriMesh, values: np.ndarray) -> np.ndarray:
    """
    旧メッシュの頂点値を新メッシュの頂点へ移します。

    共通の頂点は値をそのまま写し、新しい頂点は、その頂点を含む旧要素上の
    P1補間 (重心座標) で値を決めます。

    Args:
        old: 旧メッシュ
        new: 同じ基礎格子から生成された新メッシュ
        values: (Nv_old, ...) 頂点値

    Returns:
        (Nv_new, ...) 頂点値
    """
    data = np.asarray(values, dtype=float)
    if data.shape[0] != old.num_vertices:
        raise FieldError(
            f"Transfer source has {data.shape[0]} rows, mesh has {old.num_vertices} vertices"
        )
    if old.layout != new.layout:
        raise MeshError("Field transfer requires meshes generated from the same base grid")

    lookup = {key: index for index, key in enumerate(old.vertex_keys)}
    result = np.empty((new.num_vertices,) + data.shape[1:], dtype=float)
    assigned = np.zeros(new.num_vertices, dtype=bool)
    for index, key in enumerate(new.vertex_keys):
        source = lookup.get(key)
        if source is not None:
            result[index] = data[source]
            assigned[index] = True
    if assigned.all():
        return result

    old_elements = {code: index for index, code in enumerate(old.codes)}
    for element, code in enumerate(new.codes):
        corners = new.simplices[element]
        if assigned[corners].all():
            continue
        parent = None
        for k in range(len(code) - 1, 0, -1):
            parent = old_elements.get(code[:k])
            if parent is not None:
                break
        if parent is None:
            continue
        parent_corners = old.simplices[parent]
        for vertex in corners[~assigned[corners]]:
            weights = _barycentric(old.vertices[parent_corners], new.vertices[vertex])
            result[vertex] = np.tensordot(weights, data[parent_corners], axes=1)
            assigned[vertex] = True

    if not assigned.all():
        raise MeshError(f"{int((~assigned).sum())} vertices could not be located in the old mesh")
    return result
