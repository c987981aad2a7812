"""
対称行列のスペクトル計算

小さな対称行列 (d = 2, 3) に対する固有分解とスペクトル関数、正則化関数 g_δ, β_δ, f_δ、
弾性応力、および要素ごとの離散連鎖律演算子 Λ の構成を提供します。

行列は (..., d, d) の配列で扱い、先頭の軸についてベクトル化されています。
"""
from dataclasses import dataclass
from typing import Callable, Optional, Tuple
import logging

import numpy as np

from visco_tumour.fem.mesh import AffineMap
from visco_tumour.utils.errors import SPDViolationError, SpectralDomainError

# ロガーの設定
logger = logging.getLogger(__name__)

SPD_FLOOR = 1e-12
DEGENERATE_DIFFERENCE = 1e-12
DEGENERATE_DENOMINATOR = 1e-14
LAMBDA_BOUND_SLACK = 1e-8


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"Regularization parameter must lie in (0, 1), got {delta}")


def g_delta(s, delta: float):
    """正則化された対数: s ≥ δ で ln s、s < δ で s/δ + ln δ − 1"""
    _check_delta(delta)
    s = np.asarray(s, dtype=float)
    clipped = np.maximum(s, delta)
    return np.where(s >= delta, np.log(clipped), s / delta + np.log(delta) - 1.0)


def beta_delta(s, delta: float):
    """β_δ(s) = max(s, δ)"""
    _check_delta(delta)
    return np.maximum(np.asarray(s, dtype=float), delta)


def f_delta(s, delta: float):
    """β_δ の原始関数: s ≥ δ で ½s²、s < δ で δs − ½δ²"""
    _check_delta(delta)
    s = np.asarray(s, dtype=float)
    return np.where(s >= delta, 0.5 * s * s, delta * s - 0.5 * delta * delta)


def eigh_symmetric(matrices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    対称行列の固有値 (昇順) と固有ベクトル (列) を返します。

    2×2 は閉形式、3×3 は LAPACK の対称固有値ソルバーを使います。
    """
    B = np.asarray(matrices, dtype=float)
    dim = B.shape[-1]
    if dim == 3:
        return np.linalg.eigh(0.5 * (B + np.swapaxes(B, -1, -2)))
    if dim != 2:
        raise ValueError(f"Unsupported matrix dimension {dim}")
    a = B[..., 0, 0]
    c = B[..., 1, 1]
    b = 0.5 * (B[..., 0, 1] + B[..., 1, 0])
    # ほぼ対角な行列は対角として扱う
    scale = np.abs(a) + np.abs(c)
    b = np.where(np.abs(b) <= 1e-14 * scale, 0.0, b)
    mean = 0.5 * (a + c)
    radius = np.hypot(0.5 * (a - c), b)
    theta = 0.5 * np.arctan2(2.0 * b, a - c)
    cos, sin = np.cos(theta), np.sin(theta)
    values = np.stack([mean - radius, mean + radius], axis=-1)
    vectors = np.empty(B.shape)
    vectors[..., 0, 0] = -sin
    vectors[..., 1, 0] = cos
    vectors[..., 0, 1] = cos
    vectors[..., 1, 1] = sin
    return values, vectors


def compose(values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """U diag(values) Uᵀ"""
    return np.einsum("...ik,...k,...jk->...ij", vectors, values, vectors)


def spectral_apply(
    matrices: np.ndarray, function: Callable[[np.ndarray], np.ndarray], name: str = "f"
) -> np.ndarray:
    """
    スペクトル関数 U f(D) Uᵀ を計算します。

    Raises:
        SpectralDomainError: ある固有値で関数値が有限でない場合
    """
    values, vectors = eigh_symmetric(matrices)
    with np.errstate(divide="ignore", invalid="ignore"):
        mapped = np.asarray(function(values), dtype=float)
    bad = ~np.isfinite(mapped)
    if bad.any():
        offending = float(values[bad].flat[0])
        raise SpectralDomainError(
            f"Matrix function '{name}' is undefined at eigenvalue {offending:.6g}", offending
        )
    return compose(mapped, vectors)


def require_spd(values: np.ndarray, floor: float = SPD_FLOOR) -> None:
    flat = values.reshape(-1, values.shape[-1])
    minimum = flat.min(axis=1)
    if minimum.size and minimum.min() <= floor:
        index = int(np.argmin(minimum))
        raise SPDViolationError(
            f"Matrix {index} is not positive definite (eigenvalue {minimum[index]:.6g})",
            float(minimum[index]),
            vertex=index,
        )


def matrix_log(matrices: np.ndarray) -> np.ndarray:
    values, vectors = eigh_symmetric(matrices)
    require_spd(values)
    return compose(np.log(values), vectors)


def matrix_inverse(matrices: np.ndarray) -> np.ndarray:
    values, vectors = eigh_symmetric(matrices)
    require_spd(values)
    return compose(1.0 / values, vectors)


def matrix_inverse_sqrt(matrices: np.ndarray) -> np.ndarray:
    values, vectors = eigh_symmetric(matrices)
    require_spd(values)
    return compose(1.0 / np.sqrt(values), vectors)


def matrix_g_delta(matrices: np.ndarray, delta: float) -> np.ndarray:
    return spectral_apply(matrices, lambda s: g_delta(s, delta), "g_delta")


def matrix_beta_delta(matrices: np.ndarray, delta: float) -> np.ndarray:
    return spectral_apply(matrices, lambda s: beta_delta(s, delta), "beta_delta")


def matrix_f_delta(matrices: np.ndarray, delta: float) -> np.ndarray:
    return spectral_apply(matrices, lambda s: f_delta(s, delta), "f_delta")


def min_eigenvalues(matrices: np.ndarray) -> np.ndarray:
    return eigh_symmetric(matrices)[0][..., 0]


def elastic_stress(matrices: np.ndarray, kappa) -> np.ndarray:
    """T_e = B·B + κB − I (κ はスカラーまたは先頭軸に沿った配列)"""
    B = np.asarray(matrices, dtype=float)
    kappa = np.asarray(kappa, dtype=float)[..., None, None]
    identity = np.eye(B.shape[-1])
    return B @ B + kappa * B - identity


def frobenius(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ij->...", a, b)


def _log_gap(x: np.ndarray) -> np.ndarray:
    """x − log(1 + x) (小さな|x|では級数展開)"""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    series = x * x * (0.5 - x * (1.0 / 3.0 - x * (0.25 - x * (0.2 - x / 6.0))))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = x - np.log1p(x)
    return np.where(small, series, direct)


@dataclass(frozen=True)
class VertexSpectra:
    """頂点行列の β, β⁻¹, X = B − β⁻¹, Φ = −tr f(B) − tr ln β(B)"""
    beta: np.ndarray
    beta_inverse: np.ndarray
    beta_inverse_sqrt: np.ndarray
    X: np.ndarray
    Phi: np.ndarray


def vertex_spectra(matrices: np.ndarray, delta: Optional[float] = None) -> VertexSpectra:
    """
    Λ の構成に使う頂点ごとの量を計算します。

    Args:
        matrices: (..., d, d) 頂点値
        delta: 正則化パラメータ (Noneなら正則化なし: β = id, f = ½s²)

    Raises:
        SPDViolationError: 正則化なしで正定値でない頂点値がある場合
    """
    values, vectors = eigh_symmetric(matrices)
    if delta is None:
        require_spd(values)
        clamped = values
        f_values = 0.5 * values * values
    else:
        clamped = beta_delta(values, delta)
        f_values = f_delta(values, delta)
    beta = compose(clamped, vectors)
    beta_inverse = compose(1.0 / clamped, vectors)
    return VertexSpectra(
        beta=beta,
        beta_inverse=beta_inverse,
        beta_inverse_sqrt=compose(1.0 / np.sqrt(clamped), vectors),
        X=np.asarray(matrices, dtype=float) - beta_inverse,
        Phi=-f_values.sum(axis=-1) - np.log(clamped).sum(axis=-1),
    )


@dataclass(frozen=True)
class ElementLambda:
    """
    要素ごとの Λ 演算子

    hat: (Ne, d, d, d)         局所方向 m ごとの Λ̂_m
    full: (Ne, d, d, d, d)     [e, i, j] ごとの Λ_ij|_K
    lambdas: (Ne, d)           凸結合の係数 λ_m
    degenerate: (Ne, d)        退化分岐を使った方向
    transform: (Ne, d, d, d)   Λ_ij = Σ_m transform[i, j, m] Λ̂_m
    beta_ends: (Ne, d+1, d, d) 頂点の β(B_k)
    raw_lambdas: (Ne, d)       [0, 1] に切り詰める前の比 (素朴な Λ では None)
    """
    hat: np.ndarray
    full: np.ndarray
    lambdas: np.ndarray
    degenerate: np.ndarray
    transform: np.ndarray
    beta_ends: np.ndarray
    raw_lambdas: Optional[np.ndarray] = None

    @property
    def num_degenerate(self) -> int:
        return int(self.degenerate.sum())

    @property
    def bound_excess(self) -> np.ndarray:
        """切り詰め前の λ_m が [0, 1] からはみ出した量 (はみ出さなければ0)"""
        raw = self.lambdas if self.raw_lambdas is None else self.raw_lambdas
        return np.maximum(0.0, np.maximum(-raw, raw - 1.0))

    def perturbed(self, shift: float) -> "ElementLambda":
        """λ_m をずらした演算子 (感度確認用)"""
        lambdas = self.lambdas + shift
        beta_0 = self.beta_ends[:, :1]
        beta_m = self.beta_ends[:, 1:]
        hat = beta_m + lambdas[..., None, None] * (beta_0 - beta_m)
        return ElementLambda(
            hat=hat,
            full=np.einsum("eijm,emab->eijab", self.transform, hat),
            lambdas=lambdas,
            degenerate=self.degenerate,
            transform=self.transform,
            beta_ends=self.beta_ends,
            raw_lambdas=lambdas,
        )


def build_lambda_elements(
    vertex_matrices: np.ndarray,
    inverse_transposes: np.ndarray,
    delta: Optional[float] = None,
) -> ElementLambda:
    """
    全要素の Λ を一括で構成します。

    Args:
        vertex_matrices: (Ne, d+1, d, d) 要素頂点での B
        inverse_transposes: (Ne, d, d) (A_K^T)^{-1}
        delta: 正則化パラメータ (Noneなら正則化なし)

    Returns:
        ElementLambda
    """
    B = np.asarray(vertex_matrices, dtype=float)
    spectra = vertex_spectra(B, delta)
    beta_0, beta_m = spectra.beta[:, :1], spectra.beta[:, 1:]
    d_beta = beta_m - beta_0

    # c_k − 1 = eig(β_0^{-1/2} (β_m − β_0) β_0^{-1/2})
    root = spectra.beta_inverse_sqrt[:, :1]
    relative = root @ d_beta @ root
    shifts = eigh_symmetric(relative)[0]
    log_bregman = _log_gap(shifts).sum(axis=-1)
    log_denominator = (shifts * shifts / (1.0 + shifts)).sum(axis=-1)

    d_B = B[:, 1:] - B[:, :1]
    if delta is None:
        quad_numerator = 0.5 * frobenius(d_B, d_B)
        quad_denominator = frobenius(d_B, d_B)
    else:
        tr_f = f_delta(eigh_symmetric(B)[0], delta).sum(axis=-1)
        quad_numerator = tr_f[:, :1] - tr_f[:, 1:] + frobenius(beta_m, d_B)
        quad_denominator = frobenius(d_beta, d_B)
    numerator = quad_numerator + log_bregman
    denominator = quad_denominator + log_denominator

    norm_diff = np.linalg.norm(d_beta, axis=(-2, -1))
    norm_scale = np.maximum(
        1.0,
        np.maximum(np.linalg.norm(beta_m, axis=(-2, -1)), np.linalg.norm(beta_0, axis=(-2, -1))),
    )
    degenerate = (norm_diff <= DEGENERATE_DIFFERENCE * norm_scale) | (
        denominator <= DEGENERATE_DENOMINATOR * np.maximum(np.abs(numerator), 1e-300)
    )
    safe = np.where(degenerate, 1.0, denominator)
    raw = np.where(degenerate, 0.0, numerator / safe)
    outside = np.maximum(-raw, raw - 1.0)
    violations = int(np.sum(outside > LAMBDA_BOUND_SLACK))
    if violations:
        logger.warning(
            f"Lambda ratio left [0, 1] by up to {float(outside.max()):.3e} "
            f"on {violations} element directions"
        )
    lambdas = np.clip(raw, 0.0, 1.0)
    hat = beta_m + lambdas[..., None, None] * (beta_0 - beta_m)

    inverse_transposes = np.asarray(inverse_transposes, dtype=float)
    jacobians = np.linalg.inv(np.swapaxes(inverse_transposes, -1, -2))
    # transform[i, j, m] = [A^{-T}]_{i,m} [A^T]_{m,j} = invT[i, m] · A[j, m]
    transform = np.einsum("eim,ejm->eijm", inverse_transposes, jacobians)
    full = np.einsum("eijm,emab->eijab", transform, hat)

    if degenerate.any():
        logger.debug(f"Lambda construction used the degenerate branch {int(degenerate.sum())} times")
    return ElementLambda(
        hat=hat,
        full=full,
        lambdas=lambdas,
        degenerate=degenerate,
        transform=transform,
        beta_ends=spectra.beta,
        raw_lambdas=raw,
    )


def build_lambda(
    vertex_matrices: np.ndarray, amap: AffineMap, delta: Optional[float] = None
) -> ElementLambda:
    """
    1要素の Λ を構成します。

    Args:
        vertex_matrices: (d+1, d, d) 要素頂点での B
        amap: 要素のアフィン写像
        delta: 正則化パラメータ (Noneなら正則化なし)

    Returns:
        先頭軸の長さが1の ElementLambda
    """
    return build_lambda_elements(
        np.asarray(vertex_matrices, dtype=float)[None],
        np.asarray(amap.inverse_transpose, dtype=float)[None],
        delta,
    )


def _reference_gradients(inverse_transpose: np.ndarray) -> np.ndarray:
    """(d+1, d) P1基底の勾配"""
    tail = inverse_transpose.T
    return np.vstack([-tail.sum(axis=0), tail])


def chain_rule_residual(
    vertex_matrices: np.ndarray,
    amap: AffineMap,
    delta: Optional[float] = None,
    element_lambda: Optional[ElementLambda] = None,
    relative: bool = False,
) -> float:
    """
    離散連鎖律 Σ_j Λ_ij : ∂_j I_h[−X] = ∂_i I_h[Φ] の残差 (方向iについての最大値) を返します。

    Args:
        vertex_matrices: (d+1, d, d) 要素頂点での B
        amap: 要素のアフィン写像
        delta: 正則化パラメータ
        element_lambda: 事前に構成した Λ (省略時は構成する)
        relative: 項の大きさで割った相対残差を返すかどうか
    """
    B = np.asarray(vertex_matrices, dtype=float)
    lam = element_lambda or build_lambda(B, amap, delta)
    spectra = vertex_spectra(B, delta)
    grads = _reference_gradients(np.asarray(amap.inverse_transpose, dtype=float))
    grad_U = np.einsum("kj,kab->jab", grads, -spectra.X)
    grad_Phi = grads.T @ spectra.Phi
    terms = np.einsum("ijab,jab->ij", lam.full[0], grad_U)
    lhs = terms.sum(axis=1)
    residual = float(np.max(np.abs(lhs - grad_Phi)))
    if not relative:
        return residual
    scale = float(np.max(np.abs(terms).sum(axis=1) + np.abs(grad_Phi)))
    return residual / max(scale, 1e-300)


def gradient_log_gap(
    vertex_matrices: np.ndarray,
    gradients: np.ndarray,
    volumes: np.ndarray,
    delta: Optional[float] = None,
) -> np.ndarray:
    """
    要素ごとに −⟨∇B, ∇I_h β⁻¹(B)⟩_K − (1/d)‖∇I_h tr ln β(B)‖²_K を返します。
    非鈍角メッシュでは非負になります。

    Args:
        vertex_matrices: (Ne, d+1, d, d)
        gradients: (Ne, d+1, d) P1基底の勾配
        volumes: (Ne,) 要素体積
        delta: 正則化パラメータ
    """
    B = np.asarray(vertex_matrices, dtype=float)
    spectra = vertex_spectra(B, delta)
    dim = B.shape[-1]
    stiffness = np.einsum("ekd,eld->ekl", gradients, gradients)
    pairing = np.einsum("ekab,elab->ekl", B, spectra.beta_inverse)
    first = -volumes * np.einsum("ekl,ekl->e", stiffness, pairing)
    values = eigh_symmetric(B)[0]
    clamped = values if delta is None else beta_delta(values, delta)
    trace_log = np.log(clamped).sum(axis=-1)
    grad_log = np.einsum("ekd,ek->ed", gradients, trace_log)
    second = volumes * np.einsum("ed,ed->e", grad_log, grad_log) / dim
    return first - second
