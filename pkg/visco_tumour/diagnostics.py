"""
診断量

離散エネルギー、腫瘍体積、正定値性の余裕、スキームの恒等式の残差、
σ の H¹ ノルムを計算し、時間ステップごとの行として蓄積します。
"""
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Tuple
import logging
import math

import numpy as np
import pandas as pd
from scipy import sparse

from visco_tumour.fem.assembly import convection_vector, mass_matrix, stiffness_matrix
from visco_tumour.fem.fespace import MatrixField, ScalarField, frobenius_weights
from visco_tumour.fem.tensorcalc import eigh_symmetric, g_delta, require_spd
from visco_tumour.model import ModelParams, kappa, kappa_quotient, psi, psi_split, sources
from visco_tumour.solver.operators import SchemeOperators
from visco_tumour.solver.state import FieldState
from visco_tumour.utils.errors import FieldError

# ロガーの設定
logger = logging.getLogger(__name__)

# CSVの列 (順序固定)
CSV_COLUMNS = (
    "time",
    "energy",
    "tumour_volume",
    "spd_margin",
    "iters",
    "res_cons",
    "res_div",
    "res_mu",
    "sigma_h1",
)

# 一般化エネルギーで ln の代わりに使う g_δ の δ
GENERAL_ENERGY_DELTA = 1e-3


@dataclass(frozen=True)
class StepDiagnostics:
    """1ステップ分の診断量"""
    time: float
    energy: float
    tumour_volume: float
    spd_margin: float
    iters: int
    res_cons: float
    res_div: float
    res_mu: float
    sigma_h1: float
    phi_overshoot: float = 0.0
    general_energy: float = 0.0
    supply_l2: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise FieldError(f"Diagnostic '{name}' is not finite ({value})")

    def csv_row(self) -> Tuple[float, ...]:
        return tuple(getattr(self, column) for column in CSV_COLUMNS)


def _frobenius_squared(B: MatrixField) -> np.ndarray:
    return (B.values ** 2) @ frobenius_weights(B.space.mesh.dim)


def _trace(B: MatrixField) -> np.ndarray:
    return B.values[:, : B.space.mesh.dim].sum(axis=1)


def _phase_energy(phi: ScalarField, params: ModelParams, stiffness: Optional[sparse.spmatrix] = None) -> float:
    weights = phi.space.vertex_weights
    if stiffness is None:
        stiffness = stiffness_matrix(phi.space)
    gradient = float(phi.values @ (stiffness @ phi.values))
    return 0.5 * params.beta * params.eps * gradient + (params.beta / params.eps) * float(
        weights @ psi(phi.values)
    )


def discrete_energy(
    state: FieldState, params: ModelParams, stiffness: Optional[sparse.spmatrix] = None
) -> float:
    """
    F_h = (βε/2)‖∇φ‖² + (β/ε)⟨ψ(φ),1⟩_h + ¼‖B‖²_h + ½⟨κ(φ)trB − tr ln B, 1⟩_h

    stiffness にはメッシュの剛性行列を渡せます (省略時は組み立てます)。

    Raises:
        SPDViolationError: B がある頂点で正定値でない場合
    """
    weights = state.phi.space.vertex_weights
    values = eigh_symmetric(state.B.full())[0]
    require_spd(values)
    trace_log = np.log(values).sum(axis=1)
    elastic = 0.25 * _frobenius_squared(state.B) + 0.5 * (
        kappa(state.phi.values, params) * _trace(state.B) - trace_log
    )
    return _phase_energy(state.phi, params, stiffness) + float(weights @ elastic)


def general_energy(
    state: FieldState,
    params: ModelParams,
    delta: float = GENERAL_ENERGY_DELTA,
    stiffness: Optional[sparse.spmatrix] = None,
) -> float:
    """
    源泉項のある一般の場合の安定性評価に現れるエネルギー

    (βε/2)‖∇φ‖² + (β/ε)⟨ψ(φ),1⟩_h + ⟨¼|B|² + ½κ(φ)trB − ½tr g_δ(B), 1⟩_h で、
    κ(φ) は頂点ごとに評価します。源泉項は時間発展だけに現れ、この汎関数には入りません。
    B が正定値でなくても定義されます。
    """
    weights = state.phi.space.vertex_weights
    values = eigh_symmetric(state.B.full())[0]
    trace_g = g_delta(values, delta).sum(axis=1)
    elastic = 0.25 * _frobenius_squared(state.B) + 0.5 * (
        kappa(state.phi.values, params) * _trace(state.B) - trace_g
    )
    return _phase_energy(state.phi, params, stiffness) + float(weights @ elastic)


def spd_margin(B: MatrixField) -> float:
    """頂点ごとの最小固有値の最小値"""
    return float(eigh_symmetric(B.full())[0][:, 0].min())


def tumour_volume(phi: ScalarField) -> float:
    return float(phi.space.vertex_weights @ (0.5 * (1.0 + phi.values)))


def phi_overshoot(phi: ScalarField) -> float:
    return float(max(0.0, np.max(np.abs(phi.values)) - 1.0))


def sigma_h1_norm(sigma: ScalarField, matrix: Optional[sparse.spmatrix] = None) -> float:
    """整合質量 + 剛性による H¹ ノルム"""
    if matrix is None:
        matrix = mass_matrix(sigma.space) + stiffness_matrix(sigma.space)
    return float(math.sqrt(max(float(sigma.values @ (matrix @ sigma.values)), 0.0)))


def boundary_l2_norm(field: ScalarField, ops: SchemeOperators) -> float:
    return float(math.sqrt(max(float(field.values @ (ops.boundary @ field.values)), 0.0)))


def identity_residuals(
    state: FieldState, prev: FieldState, ops: SchemeOperators
) -> Tuple[float, float, float]:
    """
    保存則、発散拘束、μ の平均の3つの残差を返します。

    保存則は ζ_h = 1 とした φ の式、発散拘束は全ての圧力基底に対する最大値、
    μ の平均は ρ_h = 1 とした μ の式です。

    Raises:
        FieldError: 2つの状態が異なるメッシュ上にある場合
    """
    if state.mesh is not prev.mesh or state.mesh is not ops.mesh:
        raise FieldError("Identity residuals need consecutive states on the same mesh")
    params = ops.params
    weights = ops.weights
    phi, phi_old = state.phi.values, prev.phi.values
    src = sources(phi_old, state.sigma.values, params)
    gradient = ops.p1_gradients(phi_old)

    convection = convection_vector(ops.pressure, ops.velocity, ops.integrals, state.v.values, gradient)
    conservation = (
        float(weights @ (phi - phi_old)) / params.dt
        + float(convection.sum())
        + float(weights @ (phi_old * src.gamma_v - src.gamma_phi))
    )

    divergence = ops.divergence @ state.v.values - weights * src.gamma_v
    div_residual = float(np.max(np.abs(divergence), initial=0.0))

    split, _ = psi_split(phi, phi_old)
    pointwise = (
        -state.mu.values
        + (params.beta / params.eps) * split
        - params.chi_phi * state.sigma.values
        + 0.5 * kappa_quotient(phi, phi_old, params) * _trace(state.B)
    )
    mu_mean = float(weights @ pointwise)
    return abs(conservation), div_residual, abs(mu_mean)


def compute_step_diagnostics(
    state: FieldState,
    prev: FieldState,
    ops: SchemeOperators,
    sigma_inf: Optional[ScalarField] = None,
) -> StepDiagnostics:
    """受理されたステップの診断量をまとめます。"""
    params = ops.params
    res_cons, res_div, res_mu = identity_residuals(state, prev, ops)
    return StepDiagnostics(
        time=state.time,
        energy=discrete_energy(state, params, ops.stiffness),
        tumour_volume=tumour_volume(state.phi),
        spd_margin=spd_margin(state.B),
        iters=state.nonlinear_iters,
        res_cons=res_cons,
        res_div=res_div,
        res_mu=res_mu,
        sigma_h1=sigma_h1_norm(state.sigma, ops.h1),
        phi_overshoot=phi_overshoot(state.phi),
        general_energy=general_energy(state, params, stiffness=ops.stiffness),
        supply_l2=boundary_l2_norm(sigma_inf, ops) if sigma_inf is not None else 0.0,
    )


def diagnostics_frame(rows: Iterable[StepDiagnostics]) -> pd.DataFrame:
    """診断行を DataFrame にします (CSVの列が先頭)。"""
    records = [asdict(row) for row in rows]
    columns = list(CSV_COLUMNS) + [
        name for name in StepDiagnostics.__dataclass_fields__ if name not in CSV_COLUMNS
    ]
    frame = pd.DataFrame.from_records(records, columns=columns)
    return frame.astype({"iters": "int64"})


def sigma_stability_ratio(frame: pd.DataFrame) -> float:
    """max_n ‖σ^n‖_{H¹} / max_n ‖σ_∞^n‖_{L²(∂Ω)} (供給が0なら nan)"""
    if frame.empty:
        return float("nan")
    supply = float(frame["supply_l2"].max())
    if supply <= 0.0:
        return float("nan")
    return float(frame["sigma_h1"].max()) / supply
