"""
線形ソルバー

対称正定値系の前処理付き共役勾配法、非対称系の不完全LU前処理付きBiCGSTAB、
鞍点系のブロック対角前処理付きMINRESを提供します。
いずれも真の相対残差を確認し、許容値を満たさなければ例外を送出します。
"""
from typing import Optional, Tuple
import logging

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from visco_tumour.solver.state import LinearSolveReport
from visco_tumour.utils.errors import LinearSolverError, StokesSolveError

# ロガーの設定
logger = logging.getLogger(__name__)

# 不完全LUの設定 (通常, 強化)
ILU_SETTINGS = ({"drop_tol": 1e-4, "fill_factor": 10.0}, {"drop_tol": 1e-8, "fill_factor": 40.0})


class _Counter:
    def __init__(self):
        self.count = 0

    def __call__(self, *_):
        self.count += 1


def relative_residual(matrix, x: np.ndarray, rhs: np.ndarray) -> float:
    norm = np.linalg.norm(rhs)
    residual = np.linalg.norm(rhs - matrix @ x)
    return float(residual / norm) if norm > 0 else float(residual)


def _zero_solution(rhs: np.ndarray, method: str, tol: float) -> Tuple[np.ndarray, LinearSolveReport]:
    return np.zeros_like(rhs), LinearSolveReport(method, 0, 0.0, tol, True)


def solve_spd(
    matrix: sparse.spmatrix,
    rhs: np.ndarray,
    tol: float = 1e-10,
    x0: Optional[np.ndarray] = None,
    maxiter: Optional[int] = None,
    label: str = "cg",
) -> Tuple[np.ndarray, LinearSolveReport]:
    """
    Jacobi前処理付き共役勾配法で対称正定値系を解きます。

    Args:
        matrix: 対称正定値行列
        rhs: 右辺
        tol: 相対残差の許容値
        x0: 初期値
        maxiter: 最大反復回数
        label: ログ用の名前

    Returns:
        (解, 報告)

    Raises:
        LinearSolverError: 許容値に到達しない場合
    """
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return _zero_solution(rhs, label, tol)
    matrix = sparse.csr_matrix(matrix)
    diagonal = matrix.diagonal()
    if np.any(diagonal <= 0.0):
        raise LinearSolverError(f"{label}: matrix has a non-positive diagonal entry")
    inverse = 1.0 / diagonal
    preconditioner = spla.LinearOperator(matrix.shape, matvec=lambda r: inverse * r)
    counter = _Counter()
    x, info = spla.cg(
        matrix, rhs, x0=x0, rtol=0.1 * tol, atol=0.0,
        maxiter=maxiter or 10 * matrix.shape[0], M=preconditioner, callback=counter,
    )
    residual = relative_residual(matrix, x, rhs)
    report = LinearSolveReport(label, counter.count, residual, tol, residual <= tol)
    logger.debug(f"{label}: {counter.count} iterations, relative residual {residual:.3e}")
    if not report.converged:
        raise LinearSolverError(
            f"{label}: conjugate gradients stagnated at relative residual {residual:.3e} (info={info})",
            report.to_dict(),
        )
    return x, report


class IncompleteLU:
    """
    非線形反復の間で使い回す不完全LU分解

    行列がわずかに変わるだけの連続した solve_nonsymmetric 呼び出しで共有します。
    使い回した分解で収束しなければ、その場で分解し直します。
    """

    def __init__(self):
        self.factor = None
        self.factorizations = 0

    def refresh(self, matrix: sparse.csc_matrix, settings: dict):
        self.factor = spla.spilu(matrix, **settings)
        self.factorizations += 1
        return self.factor


def solve_nonsymmetric(
    matrix: sparse.spmatrix,
    rhs: np.ndarray,
    tol: float = 1e-10,
    x0: Optional[np.ndarray] = None,
    label: str = "bicgstab",
    reuse: Optional[IncompleteLU] = None,
) -> Tuple[np.ndarray, LinearSolveReport]:
    """
    不完全LU前処理付きBiCGSTABで解きます。失敗した場合は前処理を強化して1回だけ再試行します。

    Args:
        matrix: 係数行列
        rhs: 右辺
        tol: 相対残差の許容値
        x0: 初期値
        label: ログ用の名前
        reuse: 前回の分解を前処理に使う場合の保持先

    Raises:
        LinearSolverError: 再試行後も許容値に到達しない場合
    """
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return _zero_solution(rhs, label, tol)
    matrix = sparse.csc_matrix(matrix)
    holder = reuse if reuse is not None else IncompleteLU()
    attempts = [None] if holder.factor is not None else []
    attempts.extend(ILU_SETTINGS)
    report = None
    for attempt, settings in enumerate(attempts):
        if settings is None:
            factor = holder.factor
        else:
            try:
                factor = holder.refresh(matrix, settings)
            except RuntimeError as e:
                logger.warning(f"{label}: incomplete LU failed ({str(e)}), attempt {attempt + 1}")
                continue
        preconditioner = spla.LinearOperator(matrix.shape, factor.solve)
        counter = _Counter()
        x, info = spla.bicgstab(
            matrix, rhs, x0=x0, rtol=0.1 * tol, atol=0.0,
            maxiter=2000 if settings is not None else 200, M=preconditioner, callback=counter,
        )
        residual = relative_residual(matrix, x, rhs) if np.all(np.isfinite(x)) else np.inf
        report = LinearSolveReport(label, counter.count, residual, tol, residual <= tol)
        if report.converged:
            logger.debug(f"{label}: {counter.count} iterations, relative residual {residual:.3e}")
            return x, report
        if settings is None:
            logger.debug(f"{label}: reused incomplete LU stalled at {residual:.3e}, refactorizing")
            continue
        logger.warning(
            f"{label}: relative residual {residual:.3e} after {counter.count} iterations "
            f"(info={info}), retrying with stronger preconditioning"
        )
    raise LinearSolverError(
        f"{label}: stabilized bi-conjugate gradients failed",
        report.to_dict() if report else None,
    )


class SaddlePointSolver:
    """
    [[A, −Bᵀ], [−B, 0]] の対称不定値系をブロック対角前処理付きMINRESで解きます。

    前処理は diag(A⁻¹, 2η̄ M_p⁻¹) で、A は疎LU分解、M_p は集中圧力質量です。
    A と B は Dirichlet自由度を除いた縮約済みの行列を受け取ります。
    """

    def __init__(
        self,
        velocity_block: sparse.spmatrix,
        divergence: sparse.spmatrix,
        pressure_weights: np.ndarray,
        eta_bar: float,
        tol: float = 1e-9,
        max_refinements: int = 3,
    ):
        self.A = sparse.csc_matrix(velocity_block)
        self.B = sparse.csr_matrix(divergence)
        self.nv = self.A.shape[0]
        self.np = self.B.shape[0]
        self.tol = tol
        self.max_refinements = max_refinements
        self.pressure_weights = np.asarray(pressure_weights, dtype=float)
        self.eta_bar = eta_bar
        self._factor = spla.splu(self.A)
        self.system = sparse.bmat([[self.A, -self.B.T], [-self.B, None]], format="csr")
        schur_scale = 2.0 * eta_bar / self.pressure_weights

        def apply(r: np.ndarray) -> np.ndarray:
            out = np.empty_like(r)
            out[: self.nv] = self._factor.solve(r[: self.nv])
            out[self.nv:] = schur_scale * r[self.nv:]
            return out

        size = self.nv + self.np
        self.preconditioner = spla.LinearOperator((size, size), matvec=apply)

    def solve(
        self,
        force: np.ndarray,
        constraint: np.ndarray,
        x0: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    ) -> Tuple[np.ndarray, np.ndarray, LinearSolveReport]:
        """
        A v − Bᵀ p = force, B v = constraint を解きます。

        許容値は右辺全体に対する相対残差です。初期値を渡した場合は、その残差に対する
        補正だけを必要な精度まで解きます。

        Args:
            force: 速度の右辺 (自由度のみ)
            constraint: 拘束の右辺
            x0: (速度, 圧力) の初期値

        Returns:
            (速度, 圧力, 報告)

        Raises:
            StokesSolveError: 反復が収束しない場合 (Schur補元のスペクトル推定付き)
        """
        rhs = np.concatenate([force, -np.asarray(constraint, dtype=float)])
        if not np.any(rhs):
            return np.zeros(self.nv), np.zeros(self.np), LinearSolveReport("minres", 0, 0.0, self.tol, True)
        norm = np.linalg.norm(rhs)
        if x0 is None:
            x = np.zeros_like(rhs)
        else:
            x = np.concatenate([np.asarray(x0[0], dtype=float), np.asarray(x0[1], dtype=float)])
        iterations = 0
        residual = float(np.linalg.norm(rhs - self.system @ x) / norm)
        for _ in range(1 + self.max_refinements):
            if residual <= self.tol:
                break
            correction_rhs = rhs - self.system @ x
            # 補正の相対許容値は、全体の残差が tol/10 になるように決める
            target = min(0.5, 0.1 * self.tol * norm / np.linalg.norm(correction_rhs))
            counter = _Counter()
            correction, info = spla.minres(
                self.system, correction_rhs, rtol=target,
                maxiter=5 * (self.nv + self.np), M=self.preconditioner, callback=counter,
            )
            iterations += counter.count
            if not np.all(np.isfinite(correction)):
                break
            x = x + correction
            residual = float(np.linalg.norm(rhs - self.system @ x) / norm)
        report = LinearSolveReport("minres", iterations, residual, self.tol, residual <= self.tol)
        logger.debug(f"minres: {iterations} iterations, relative residual {residual:.3e}")
        if not report.converged:
            low, high = self.schur_spectrum()
            raise StokesSolveError(
                f"Saddle-point solve stalled at relative residual {residual:.3e}",
                report.to_dict(),
                {"schur_min": low, "schur_max": high},
            )
        return x[: self.nv], x[self.nv:], report

    def schur_operator(self) -> spla.LinearOperator:
        """M_p^{-1/2} B A⁻¹ Bᵀ M_p^{-1/2}"""
        scale = 1.0 / np.sqrt(self.pressure_weights)

        def apply(q: np.ndarray) -> np.ndarray:
            return scale * (self.B @ self._factor.solve(self.B.T @ (scale * q)))

        return spla.LinearOperator((self.np, self.np), matvec=apply, dtype=float)

    def schur_spectrum(self) -> Tuple[float, float]:
        """前処理付きSchur補元の最小・最大固有値の推定値"""
        operator = self.schur_operator()
        estimates = []
        for which in ("SA", "LA"):
            try:
                value = spla.eigsh(operator, k=1, which=which, maxiter=2000, tol=1e-6,
                                   return_eigenvectors=False)
                estimates.append(float(value[0]))
            except (spla.ArpackNoConvergence, spla.ArpackError) as e:
                logger.warning(f"Schur spectrum estimate ({which}) failed: {str(e)}")
                estimates.append(float("nan"))
        return estimates[0], estimates[1]
