"""
性質検証スイート

離散連鎖律、λ の範囲、勾配-対数不等式、Λ の一致性、集中質量ノルムの同値性、
inf-sup 条件を乱数入力で確認します。`check` コマンドとRPCの check.run から使われます。
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence
import logging
import math
import time

import numpy as np

from visco_tumour.fem.assembly import lumped_mass, mass_matrix
from visco_tumour.fem.fespace import ScalarSpace
from visco_tumour.fem.mesh import BoundarySegment, affine_map, build_structured
from visco_tumour.fem.quadrature import quadrature_rule
from visco_tumour.fem.tensorcalc import (
    LAMBDA_BOUND_SLACK,
    build_lambda,
    build_lambda_elements,
    chain_rule_residual,
    gradient_log_gap,
)
from visco_tumour.model import ModelParams
from visco_tumour.solver.operators import SchemeOperators
from visco_tumour.utils.errors import ConfigurationError

# ロガーの設定
logger = logging.getLogger(__name__)

REGULARIZATIONS = (None, 0.5, 0.1, 0.01)


@dataclass
class SuiteResult:
    """検証スイートの結果"""
    name: str
    passed: bool
    cases: int
    worst: float
    threshold: float
    seconds: float = 0.0
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def random_spd(rng: np.random.Generator, count: int, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """固有値の対数が [low, high] に一様分布する (count, 2, 2) の正定値行列"""
    angles = rng.uniform(0.0, math.pi, count)
    c, s = np.cos(angles), np.sin(angles)
    rotations = np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)
    eigenvalues = np.exp(rng.uniform(low, high, (count, 2)))
    return np.einsum("nij,nj,nkj->nik", rotations, eigenvalues, rotations)


def random_symmetric(rng: np.random.Generator, count: int, low: float, high: float) -> np.ndarray:
    """固有値が [low, high] に一様分布する (count, 2, 2) の対称行列"""
    angles = rng.uniform(0.0, math.pi, count)
    c, s = np.cos(angles), np.sin(angles)
    rotations = np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)
    eigenvalues = rng.uniform(low, high, (count, 2))
    return np.einsum("nij,nj,nkj->nik", rotations, eigenvalues, rotations)


def random_structured_mesh(rng: np.random.Generator, max_cells: int = 6):
    """ランダムな矩形とセル数の構造化メッシュ"""
    lower = rng.uniform(-2.0, 0.0, 2)
    upper = lower + rng.uniform(0.5, 3.0, 2)
    return build_structured(lower, upper, int(rng.integers(1, max_cells + 1)))


def check_chain_rule(rng: np.random.Generator, samples: int = 500, tolerance: float = 1e-10) -> SuiteResult:
    """
    ランダムな要素と頂点値で離散連鎖律の相対残差を評価します。

    正則化なしでは正定値行列、正則化ありでは負の固有値を含む対称行列を使います。
    λ の範囲は [0, 1] に切り詰める前の比で確認します。
    """
    worst = 0.0
    worst_lambda = 0.0
    per_delta: Dict[str, float] = {}
    lambda_violations = 0
    for delta in REGULARIZATIONS:
        label = "none" if delta is None else str(delta)
        per_delta[label] = 0.0
        for _ in range(samples):
            mesh = random_structured_mesh(rng)
            amap = affine_map(mesh, int(rng.integers(mesh.num_elements)))
            if delta is None:
                B = random_spd(rng, 3)
            else:
                B = random_symmetric(rng, 3, -0.5, 3.0)
            lam = build_lambda(B, amap, delta)
            residual = chain_rule_residual(B, amap, delta, element_lambda=lam, relative=True)
            per_delta[label] = max(per_delta[label], residual)
            excess = lam.bound_excess[0]
            worst_lambda = max(worst_lambda, float(excess.max()))
            lambda_violations += int(np.sum(excess > LAMBDA_BOUND_SLACK))
        worst = max(worst, per_delta[label])
    return SuiteResult(
        name="chain_rule",
        passed=worst <= tolerance and lambda_violations == 0,
        cases=samples * len(REGULARIZATIONS),
        worst=worst,
        threshold=tolerance,
        details={"per_delta": per_delta, "lambda_violations": lambda_violations, "lambda_excess": worst_lambda},
    )


def check_gradient_log(rng: np.random.Generator, samples: int = 200, slack: float = 1e-11) -> SuiteResult:
    """非鈍角メッシュ上の勾配-対数不等式の要素ごとの余裕 (項の大きさで正規化)"""
    worst = math.inf
    elements = 0
    for index in range(samples):
        mesh = random_structured_mesh(rng, max_cells=4)
        B = random_spd(rng, mesh.num_vertices)
        delta = REGULARIZATIONS[index % len(REGULARIZATIONS)]
        gap = gradient_log_gap(B[mesh.simplices], mesh.basis_gradients, mesh.volumes, delta)
        scale = np.maximum(1.0, np.abs(gap))
        worst = min(worst, float(np.min(gap / scale)))
        elements += mesh.num_elements
    return SuiteResult(
        name="gradient_log",
        passed=worst >= -slack,
        cases=samples,
        worst=worst,
        threshold=-slack,
        details={"elements": elements},
    )


def smooth_spd_field(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    result = np.empty((points.shape[0], 2, 2))
    result[:, 0, 0] = 2.0 + np.sin(x)
    result[:, 1, 1] = 2.0 + np.cos(y)
    result[:, 0, 1] = result[:, 1, 0] = 0.5 * np.sin(x + y)
    return result


def lambda_consistency_error(n: int) -> float:
    """‖Λ_ij − δ_ij B_h‖_{L²} を単位正方形の n×n メッシュで計算します。"""
    mesh = build_structured((0.0, 0.0), (1.0, 1.0), n)
    B = smooth_spd_field(mesh.vertices)
    corners = B[mesh.simplices]
    lam = build_lambda_elements(corners, mesh.inverse_transposes)
    rule = quadrature_rule(2, 2)
    # B_h at quadrature points: (Ne, q, 2, 2)
    B_h = np.einsum("qk,ekab->eqab", rule.points, corners)
    identity = np.eye(2)
    difference = lam.full[:, None] - identity[None, None, :, :, None, None] * B_h[:, :, None, None]
    squared = np.einsum("eqijab,eqijab->eq", difference, difference)
    return math.sqrt(float(np.einsum("e,q,eq->", mesh.volumes, rule.weights, squared)))


def check_lambda_consistency(sizes: Sequence[int] = (4, 8, 16), minimum_order: float = 0.9) -> SuiteResult:
    """細分化に対する Λ_ij と δ_ij B_h の差の収束次数"""
    errors = [lambda_consistency_error(n) for n in sizes]
    orders = [
        math.log(coarse / fine) / math.log(n_fine / n_coarse)
        for coarse, fine, n_coarse, n_fine in zip(errors, errors[1:], sizes, sizes[1:])
    ]
    worst = min(orders)
    return SuiteResult(
        name="lambda_consistency",
        passed=worst >= minimum_order,
        cases=len(sizes),
        worst=worst,
        threshold=minimum_order,
        details={"errors": errors, "orders": orders, "sizes": list(sizes)},
    )


def check_norm_equivalence(rng: np.random.Generator, samples: int = 1000, upper: float = 2.0) -> SuiteResult:
    """‖q‖_h/‖q‖_{L²} ∈ [1, 2] をランダムなP1場で確認します。"""
    ratios = []
    for _ in range(samples // 100 or 1):
        space = ScalarSpace(random_structured_mesh(rng))
        lumped, consistent = lumped_mass(space), mass_matrix(space)
        for _ in range(100):
            q = rng.standard_normal(space.dim)
            ratios.append(math.sqrt(float(q @ (lumped @ q)) / float(q @ (consistent @ q))))
    ratios = np.asarray(ratios)
    low, high = float(ratios.min()), float(ratios.max())
    violations = int(np.sum((ratios < 1.0 - 1e-12) | (ratios > upper + 1e-12)))
    return SuiteResult(
        name="norm_equivalence",
        passed=violations == 0,
        cases=int(ratios.size),
        worst=high,
        threshold=upper,
        details={"min_ratio": low, "max_ratio": high, "violations": violations},
    )


def check_inf_sup(
    sizes: Sequence[int] = (4, 8),
    variants: Sequence[str] = ("taylor_hood", "mini"),
    floor: float = 1e-3,
) -> SuiteResult:
    """
    前処理付きSchur補元の最小固有値が細分化で0に近づかないことを確認します。
    """
    estimates: Dict[str, List[float]] = {}
    for variant in variants:
        params = ModelParams(element_variant=variant)
        estimates[variant] = []
        for n in sizes:
            mesh = build_structured((-1.0, -1.0), (1.0, 1.0), n, (BoundarySegment("xmin"),))
            low, _ = SchemeOperators(mesh, params).saddle.schur_spectrum()
            estimates[variant].append(low)
    lows = [value for values in estimates.values() for value in values]
    worst = min(lows) if all(math.isfinite(value) for value in lows) else float("nan")
    return SuiteResult(
        name="inf_sup",
        passed=math.isfinite(worst) and worst >= floor,
        cases=len(lows),
        worst=worst,
        threshold=floor,
        details={"schur_min": estimates, "sizes": list(sizes)},
    )


def _suites(seed: int, scale: float) -> Dict[str, Callable[[], SuiteResult]]:
    def count(base: int) -> int:
        return max(1, int(round(base * scale)))

    rng = np.random.default_rng(seed)
    return {
        "chain_rule": lambda: check_chain_rule(rng, count(500)),
        "gradient_log": lambda: check_gradient_log(rng, count(200)),
        "lambda_consistency": lambda: check_lambda_consistency(),
        "norm_equivalence": lambda: check_norm_equivalence(rng, max(100, count(1000))),
        "inf_sup": lambda: check_inf_sup(),
    }


SUITE_NAMES = ("chain_rule", "gradient_log", "lambda_consistency", "norm_equivalence", "inf_sup")


def run_checks(names: Optional[Iterable[str]] = None, seed: int = 0, scale: float = 1.0) -> List[SuiteResult]:
    """
    検証スイートを実行します。

    Args:
        names: 実行するスイート名 (省略時はすべて)
        seed: 乱数シード
        scale: 標本数の倍率

    Returns:
        スイートごとの結果

    Raises:
        ConfigurationError: 未知のスイート名
    """
    selected = list(names) if names else list(SUITE_NAMES)
    unknown = [name for name in selected if name not in SUITE_NAMES]
    if unknown:
        raise ConfigurationError(f"Unknown check suites {unknown}, expected a subset of {list(SUITE_NAMES)}")
    suites = _suites(seed, scale)
    results = []
    for name in selected:
        started = time.perf_counter()
        result = suites[name]()
        result.seconds = time.perf_counter() - started
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(
            level,
            f"check {name}: {'passed' if result.passed else 'FAILED'} "
            f"(worst {result.worst:.3e}, threshold {result.threshold:.3e}, {result.cases} cases, {result.seconds:.2f}s)",
        )
        results.append(result)
    return results
