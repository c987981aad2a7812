"""
時間発展エンジン

各時間ステップで栄養素を一度解き、その後 Cahn-Hilliard → Stokes → Oldroyd-B の
部分問題を増分が許容値を下回るまで繰り返します。一定ステップごとに界面近傍の
メッシュを再生成し、場を節点補間で移します。
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, FrozenSet, Iterable, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from visco_tumour.diagnostics import (
    StepDiagnostics,
    compute_step_diagnostics,
    diagnostics_frame,
    discrete_energy,
    sigma_stability_ratio,
)
from visco_tumour.fem.fespace import (
    MINI,
    MatrixField,
    ScalarField,
    VectorField,
    interpolate_nodal,
)
from visco_tumour.fem.mesh import (
    BoundarySegment,
    TriMesh,
    build_structured,
    default_indicator_threshold,
    marked_codes,
    refine_near_interface,
    transfer_vertex_values,
)
from visco_tumour.model import (
    InitialData,
    ModelParams,
    build_initial_fields,
    kappa_quotient,
    psi_prime,
    supply_sampler,
)
from visco_tumour.solver.operators import SchemeOperators
from visco_tumour.solver.state import FieldState
from visco_tumour.solver.substeps import (
    ch_substep,
    element_lambda,
    oldroyd_substep,
    require_spd_vertices,
    solve_nutrient,
    step_context,
    stokes_substep,
)
from visco_tumour.utils.errors import ConfigurationError, NonlinearConvergenceError

# ロガーの設定
logger = logging.getLogger(__name__)

StepCallback = Callable[[FieldState, StepDiagnostics], None]


@dataclass(frozen=True)
class MeshPolicy:
    """
    初期メッシュと再メッシュの方針

    lower/upper: 領域の角
    n_coarse: 基礎格子の各軸のセル数
    dirichlet: Dirichlet境界区間
    target_h: 界面近傍の目標要素径 (Noneなら細分化しない)
    remesh_interval: 再メッシュの間隔 (0なら再メッシュしない)
    indicator_threshold: 勾配指標の閾値 (Noneなら ε から決める)
    coarsen_delay: 印付けを保持する再メッシュ回数
    """
    lower: Tuple[float, float] = (-5.0, -5.0)
    upper: Tuple[float, float] = (5.0, 5.0)
    n_coarse: int = 32
    dirichlet: Tuple[BoundarySegment, ...] = (BoundarySegment("xmin"),)
    target_h: Optional[float] = None
    remesh_interval: int = 0
    indicator_threshold: Optional[float] = None
    coarsen_delay: int = 5

    def threshold(self, params: ModelParams) -> float:
        if self.indicator_threshold is not None:
            return self.indicator_threshold
        return default_indicator_threshold(params.eps)

    @property
    def adaptive(self) -> bool:
        return self.target_h is not None


@dataclass
class RunResult:
    """run の結果"""
    state: FieldState
    diagnostics: List[StepDiagnostics]
    initial_energy: float
    remesh_count: int = 0
    steps: int = 0
    meshes: List[Tuple[int, int]] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return diagnostics_frame(self.diagnostics)

    def summary(self) -> dict:
        frame = self.frame()
        return {
            "steps": self.steps,
            "time": self.state.time,
            "initial_energy": self.initial_energy,
            "final_energy": float(frame["energy"].iloc[-1]) if len(frame) else self.initial_energy,
            "max_iters": int(frame["iters"].max()) if len(frame) else 0,
            "min_spd_margin": float(frame["spd_margin"].min()) if len(frame) else float("nan"),
            "sigma_stability_ratio": sigma_stability_ratio(frame),
            "remesh_count": self.remesh_count,
            "vertices": self.state.mesh.num_vertices,
            "elements": self.state.mesh.num_elements,
        }


def build_initial_mesh(policy: MeshPolicy, data: InitialData, params: ModelParams, max_passes: int = 32) -> TriMesh:
    """
    基礎格子を作り、φ₀ の界面近傍を target_h まで細分化します。

    細分化は φ₀ を新しいメッシュで補間し直しながら、メッシュが変わらなくなるまで繰り返します。
    """
    mesh = build_structured(policy.lower, policy.upper, policy.n_coarse, policy.dirichlet)
    if not policy.adaptive:
        return mesh
    threshold = policy.threshold(params)
    for _ in range(max_passes):
        phi = interpolate_nodal(SchemeOperators(mesh, params).scalar, data.phi0)
        refined = refine_near_interface(mesh, phi.values, policy.target_h, threshold)
        if refined.codes == mesh.codes:
            break
        mesh = refined
    logger.info(
        f"Initial mesh: {mesh.num_vertices} vertices, {mesh.num_elements} triangles, "
        f"h in [{mesh.element_diameters.min():.4g}, {mesh.element_diameters.max():.4g}]"
    )
    return mesh


def initial_chemical_potential(ops: SchemeOperators, phi: np.ndarray, B: MatrixField) -> np.ndarray:
    """μ の式から σ を除いて求めた初期反復値"""
    params = ops.params
    trace_B = B.values[:, : ops.mesh.dim].sum(axis=1)
    pointwise = (params.beta / params.eps) * psi_prime(phi) + 0.5 * kappa_quotient(phi, phi, params) * trace_B
    return pointwise + params.beta * params.eps * (ops.stiffness @ phi) / ops.weights


def initial_state(ops: SchemeOperators, data: InitialData) -> FieldState:
    fields = build_initial_fields(ops.scalar, ops.matrix, data, ops.params)
    logger.info(f"Initial stress minimum eigenvalue: {fields.min_eigenvalue:.6g}")
    return FieldState(
        n=0,
        time=0.0,
        phi=fields.phi,
        mu=ScalarField(ops.scalar, initial_chemical_potential(ops, fields.phi.values, fields.B)),
        sigma=ScalarField(ops.scalar, np.zeros(ops.scalar.dim)),
        p=ScalarField(ops.pressure, np.zeros(ops.pressure.dim)),
        v=VectorField(ops.velocity, np.zeros(ops.velocity.dim)),
        B=fields.B,
    )


class TimeStepper:
    """
    1つのメッシュ上で時間ステップを進めます。

    Args:
        ops: 離散演算子
    """

    def __init__(self, ops: SchemeOperators):
        self.ops = ops
        self.params = ops.params
        self.last_reports: dict = {}

    def time_step(self, prev: FieldState, sigma_inf: ScalarField) -> FieldState:
        """
        時間レベル n の解を計算します。

        Args:
            prev: 時間レベル n−1 の状態
            sigma_inf: σ_∞,h^n

        Returns:
            受理された状態 (nonlinear_iters と residual_log を含む)

        Raises:
            NonlinearConvergenceError: ℓ_max 回の反復で許容値に達しない場合
            SPDViolationError: B が正定値でなくなった場合
            LinearSolverError: 線形ソルバーが失敗した場合
        """
        ops = self.ops
        params = self.params
        if prev.mesh is not ops.mesh:
            raise ConfigurationError("Time step called with a state from another mesh")
        sigma, nutrient_report = solve_nutrient(ops, prev.phi.values, sigma_inf)
        ctx = step_context(ops, prev, sigma.values)

        phi, mu = prev.phi.values, prev.mu.values
        p, v, B = prev.p, prev.v, prev.B
        history: List[float] = []
        for iteration in range(1, params.max_nonlinear_iters + 1):
            lam = element_lambda(ops, B)
            phi_new, mu_new, ch_report = ch_substep(ctx, phi, mu, v.values, B)
            v_new, p_new, stokes_report = stokes_substep(ctx, mu_new, B, lam, guess=(v, p))
            B_new, oldroyd_report = oldroyd_substep(ctx, v_new, B, lam)

            increment = max(
                float(np.max(np.abs(phi_new - phi))),
                float(np.max(np.abs(mu_new - mu))),
                float(np.max(np.abs(p_new.values - p.values), initial=0.0)),
                float(np.max(np.abs(v_new.values - v.values), initial=0.0)),
                float(np.max(np.abs(B_new.values - B.values))),
            )
            history.append(increment)
            logger.debug(f"step {prev.n + 1} iteration {iteration}: increment {increment:.3e}")
            phi, mu, p, v, B = phi_new, mu_new, p_new, v_new, B_new
            if increment < params.tol_nonlinear:
                break
        else:
            raise NonlinearConvergenceError(
                f"Step {prev.n + 1} did not converge in {params.max_nonlinear_iters} iterations "
                f"(last increment {history[-1]:.3e})",
                history,
            )

        require_spd_vertices(B, f"Conformation tensor at step {prev.n + 1}")
        self.last_reports = {
            "nutrient": nutrient_report,
            "cahn_hilliard": ch_report,
            "stokes": stokes_report,
            "oldroyd": oldroyd_report,
        }
        return FieldState(
            n=prev.n + 1,
            time=(prev.n + 1) * params.dt,
            phi=ScalarField(ops.scalar, phi),
            mu=ScalarField(ops.scalar, mu),
            sigma=sigma,
            p=p,
            v=v,
            B=B,
            nonlinear_iters=len(history),
            residual_log=tuple(history),
        )


def transfer_velocity(old: VectorField, ops: SchemeOperators) -> VectorField:
    """
    頂点値を移し、辺節点は両端の平均、バブル係数は0とします。Dirichlet自由度は0です。
    """
    space = ops.velocity
    mesh = ops.mesh
    vertex = transfer_vertex_values(old.space.mesh, mesh, old.vertex_values())
    nodal = np.zeros((space.n_scalar, mesh.dim))
    nodal[: mesh.num_vertices] = vertex
    if space.variant != MINI:
        edges = mesh.edges[0]
        nodal[mesh.num_vertices:] = 0.5 * (vertex[edges[:, 0]] + vertex[edges[:, 1]])
    values = nodal.T.ravel()
    values[space.dirichlet_dofs] = 0.0
    return VectorField(space, values)


def transfer_state(state: FieldState, ops: SchemeOperators) -> FieldState:
    """状態を新しいメッシュへ節点補間で移します。"""
    old = state.mesh
    new = ops.mesh

    def scalar(f: ScalarField) -> ScalarField:
        return ScalarField(ops.scalar, transfer_vertex_values(old, new, f.values))

    B = MatrixField(ops.matrix, transfer_vertex_values(old, new, state.B.values))
    require_spd_vertices(B, "Transferred conformation tensor")
    return FieldState(
        n=state.n,
        time=state.time,
        phi=scalar(state.phi),
        mu=scalar(state.mu),
        sigma=scalar(state.sigma),
        p=scalar(state.p),
        v=transfer_velocity(state.v, ops),
        B=B,
        nonlinear_iters=state.nonlinear_iters,
        residual_log=state.residual_log,
    )


def step_count(params: ModelParams) -> int:
    steps = params.num_steps
    if abs(steps * params.dt - params.T_end) > 1e-9 * max(1.0, params.T_end):
        raise ConfigurationError(
            f"T_end={params.T_end} is not an integer multiple of dt={params.dt}",
            {"key": "model.T_end"},
        )
    return steps


def run(
    params: ModelParams,
    data: InitialData,
    policy: Optional[MeshPolicy] = None,
    callbacks: Sequence[StepCallback] = (),
    max_steps: Optional[int] = None,
    on_initial: Optional[Callable[[FieldState], None]] = None,
) -> RunResult:
    """
    N_T = T_end/Δt ステップを実行します。

    Args:
        params: モデルパラメータ
        data: 初期データ
        policy: メッシュの方針
        callbacks: 各ステップの後に (状態, 診断量) で呼ばれる関数
        max_steps: ステップ数の上限 (省略時は N_T)
        on_initial: 初期状態で一度だけ呼ばれる関数 (省略可)

    Returns:
        最終状態と診断量の系列

    Raises:
        ConfigurationError: T_end が Δt の整数倍でない場合
        SPDViolationError, NonlinearConvergenceError, LinearSolverError: ステップの失敗
    """
    policy = policy or MeshPolicy()
    steps = step_count(params)
    if max_steps is not None:
        steps = min(steps, max_steps)

    mesh = build_initial_mesh(policy, data, params)
    ops = SchemeOperators(mesh, params)
    stepper = TimeStepper(ops)
    sampler = supply_sampler(ops.scalar, data, params)
    state = initial_state(ops, data)
    result = RunResult(
        state=state,
        diagnostics=[],
        initial_energy=discrete_energy(state, params),
        meshes=[(mesh.num_vertices, mesh.num_elements)],
    )
    logger.info(f"Starting run: {steps} steps, dt={params.dt}, energy {result.initial_energy:.10g}")
    if on_initial is not None:
        on_initial(state)

    threshold = policy.threshold(params)
    recent: Deque[FrozenSet] = deque(maxlen=max(policy.coarsen_delay, 1))
    for n in range(1, steps + 1):
        supply = sampler(n)
        new_state = stepper.time_step(state, supply)
        row = compute_step_diagnostics(new_state, state, ops, supply)
        result.diagnostics.append(row)
        state = new_state
        logger.info(
            f"step {n}/{steps} t={state.time:.4f} iters={state.nonlinear_iters} "
            f"energy={row.energy:.10g} volume={row.tumour_volume:.8g} spd={row.spd_margin:.4g}"
        )
        for callback in callbacks:
            callback(state, row)

        if policy.adaptive and policy.remesh_interval > 0 and n % policy.remesh_interval == 0 and n < steps:
            recent.append(marked_codes(ops.mesh, state.phi.values, threshold))
            retain: Iterable = frozenset().union(*recent) if policy.coarsen_delay > 0 else ()
            refined = refine_near_interface(ops.mesh, state.phi.values, policy.target_h, threshold, retain)
            if refined.codes != ops.mesh.codes:
                ops = SchemeOperators(refined, params)
                state = transfer_state(state, ops)
                stepper = TimeStepper(ops)
                sampler = supply_sampler(ops.scalar, data, params)
                result.remesh_count += 1
                result.meshes.append((refined.num_vertices, refined.num_elements))
                logger.info(f"Remeshed at step {n}: {refined.num_vertices} vertices, {refined.num_elements} triangles")

    result.state = state
    result.steps = steps
    logger.info(f"Run finished: {steps} steps, {result.remesh_count} remesh events")
    return result
