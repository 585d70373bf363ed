"""Path-following semismooth Newton solver for the reduced optimality system.

With A the discrete -Laplacian, data y_delta and dual variable p, the
regularized first-order system reads

    A p + y - y_delta = 0,
    A y - H_gamma(p)  = 0,

where H_gamma is the resolvent from the penalty module. Each Newton step
solves the symmetric block system via the SPD Schur reduction; gamma is
driven from gamma0 down to gamma_min by continuation, warm-starting each
stage at the previous solution. Because the system is piecewise affine the
iteration terminates finitely once the prox field repeats between iterates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .penalty import AdmissibleSet, ProxParams, ProxTables, prox_H_field
from .poisson import (
    Grid,
    LinearSolveOptions,
    ScalarField,
    laplacian_apply,
    norm_l2,
    schur_newton_solve,
)

#: Absolute safety net for the Newton residual, scaled by (1 + ||y_delta||);
#: finite termination alone can be missed by one ulp near band edges.
RESIDUAL_TOL = 1e-11


class Termination(enum.Enum):
    FINITE_TERMINATION = "finite_termination"
    RESIDUAL_TOL = "residual_tol"
    MAX_NEWTON_EXCEEDED = "max_newton_exceeded"
    GAMMA_FLOOR = "gamma_floor"


@dataclass(frozen=True)
class SolverConfig:
    gamma0: float = 1.0
    gamma_factor: float = 0.1
    gamma_min: float = 1e-12
    max_newton: int = 100
    ls_shrink: float = 0.5
    ls_max: int = 20
    lin_opts: LinearSolveOptions = field(default_factory=LinearSolveOptions)
    warm_start_stages: bool = True  # cold-start ablation switch

    def __post_init__(self):
        if not (0 < self.gamma_min < self.gamma0):
            raise ValueError("need 0 < gamma_min < gamma0")
        if not 0 < self.gamma_factor < 1:
            raise ValueError("gamma_factor must lie in (0, 1)")
        if not 0 < self.ls_shrink < 1:
            raise ValueError("ls_shrink must lie in (0, 1)")
        if self.max_newton < 1 or self.ls_max < 1:
            raise ValueError("iteration limits must be >= 1")


@dataclass
class SolverState:
    y: ScalarField
    p: ScalarField
    gamma: float
    residual_norm: float


@dataclass
class StageResult:
    """Outcome of one fixed-gamma Newton run."""

    iterations: int
    termination: Termination
    residual_norm: float
    residual_trace: list[float] = field(default_factory=list)


@dataclass
class SolverReport:
    termination: Termination
    newton_iters_per_stage: list[int]
    stage_terminations: list[Termination]
    final_gamma: float
    final_residual: float
    singular_nodes: int
    retried_stages: int = 0
    newton_total: int = 0  # includes discarded stage attempts


@dataclass
class SolveResult:
    u: ScalarField
    state: SolverState
    report: SolverReport


def _stack_norm(grid: Grid, r1: np.ndarray, r2: np.ndarray) -> float:
    return float(np.sqrt(grid.quad_weight * (r1 @ r1 + r2 @ r2)))


def residual(
    y: ScalarField,
    p: ScalarField,
    y_delta: ScalarField,
    params: ProxParams,
    U: AdmissibleSet,
) -> tuple[ScalarField, ScalarField]:
    """Residual pair (A p + y - y_delta, A y - H_gamma(p))."""
    r1 = laplacian_apply(p).data + y.data - y_delta.data
    H, _ = prox_H_field(p, params, U)
    r2 = laplacian_apply(y).data - H.data
    return ScalarField(y.grid, r1), ScalarField(y.grid, r2)


def newton_step(
    state: SolverState,
    y_delta: ScalarField,
    params: ProxParams,
    U: AdmissibleSet,
    config: SolverConfig,
) -> tuple[ScalarField, ScalarField]:
    """One semismooth Newton step (dy, dp) at the current state."""
    r1, r2 = residual(state.y, state.p, y_delta, params, U)
    _, band = prox_H_field(state.p, params, U)
    d = np.zeros(state.y.grid.size)
    d[band] = 1.0 / params.gamma
    return schur_newton_solve(ScalarField(state.y.grid, d), r1, r2, config.lin_opts)


class _Residual:
    """Evaluates residuals, prox field and band mask with shared buffers."""

    def __init__(self, grid: Grid, y_delta: np.ndarray, tables: ProxTables):
        self.grid = grid
        self.n = grid.n
        self.inv_h2 = 1.0 / grid.quad_weight
        self.y_delta = y_delta
        self.tables = tables
        self._lap = np.empty(grid.size)

    def __call__(self, y: np.ndarray, p: np.ndarray):
        H = np.empty(self.grid.size)
        band = np.empty(self.grid.size, dtype=np.uint8)
        self.tables.apply(p, H, band)
        _kernels.laplacian(p, self.n, self.inv_h2, self._lap)
        r1 = self._lap + y - self.y_delta
        _kernels.laplacian(y, self.n, self.inv_h2, self._lap)
        r2 = self._lap - H
        return r1, r2, H, band, _stack_norm(self.grid, r1, r2)


def solve_fixed_gamma(
    state: SolverState,
    y_delta: ScalarField,
    params: ProxParams,
    U: AdmissibleSet,
    config: SolverConfig,
) -> tuple[SolverState, StageResult]:
    """Damped Newton at fixed gamma until the prox field repeats exactly.

    The full step is tried first; if its prox field equals the previous one
    bitwise the iterate solves the piecewise affine system and the stage
    ends (finite termination). Otherwise, while the stacked residual norm
    does not decrease the step is shrunk by ls_shrink up to ls_max times,
    after which the smallest-residual trial is accepted anyway.
    """
    grid = y_delta.grid
    tables = ProxTables(params, U)
    evaluate = _Residual(grid, y_delta.data, tables)
    y = state.y.data.copy()
    p = state.p.data.copy()
    r1, r2, H_prev, band, rnorm = evaluate(y, p)
    res_tol = RESIDUAL_TOL * (1.0 + norm_l2(y_delta))
    termination = Termination.MAX_NEWTON_EXCEEDED
    trace = [rnorm]
    iters = 0
    for _ in range(config.max_newton):
        iters += 1
        d = ScalarField(grid, np.where(band != 0, 1.0 / params.gamma, 0.0))
        dy, dp = schur_newton_solve(
            d, ScalarField(grid, r1), ScalarField(grid, r2), config.lin_opts
        )
        y_full = y + dy.data
        p_full = p + dp.data
        trial = evaluate(y_full, p_full)
        # finite termination: the prox field repeats under the full step,
        # so the full-step iterate solves the piecewise affine system
        if np.array_equal(trial[2], H_prev):
            y, p = y_full, p_full
            r1, r2, H_prev, band, rnorm = trial
            trace.append(rnorm)
            termination = Termination.FINITE_TERMINATION
            break
        step = 1.0
        best = ((y_full, p_full), trial)
        while trial[4] >= rnorm:
            if step <= config.ls_shrink**config.ls_max:
                break
            step *= config.ls_shrink
            trial = evaluate(y + step * dy.data, p + step * dp.data)
            if trial[4] < best[1][4]:
                best = ((y + step * dy.data, p + step * dp.data), trial)
        (y, p), (r1, r2, H, band, rnorm) = best
        trace.append(rnorm)
        H_prev = H
        if rnorm <= res_tol:
            termination = Termination.RESIDUAL_TOL
            break
    out = SolverState(
        ScalarField(grid, y), ScalarField(grid, p), params.gamma, rnorm
    )
    return out, StageResult(iters, termination, rnorm, trace)


#: Relative band-count change below which the transition set is considered
#: structurally converged and stage warm starts switch to the
#: resolvent-preserving predictor.
_BAND_STABLE_FRACTION = 0.15


def _predicted_start(
    state: SolverState, params: ProxParams, U: AdmissibleSet, next_gamma: float
) -> tuple[ScalarField, ScalarField]:
    """Resolvent-preserving stage start: shifts p so H at the new gamma
    reproduces H at the old one (exact tangent along the gamma path)."""
    H, _ = prox_H_field(state.p, params, U)
    p_next = ScalarField(state.p.grid, state.p.data - (params.gamma - next_gamma) * H.data)
    return state.y, p_next


def solve_with_continuation(
    y_delta: ScalarField,
    alpha: float,
    U: AdmissibleSet,
    config: SolverConfig = SolverConfig(),
    warm_start: tuple[ScalarField, ScalarField] | None = None,
) -> SolveResult:
    """Drive gamma from gamma0 down to gamma_min, warm-starting each stage.

    While the transition set is still shrinking structurally, each stage
    starts from the previous solution unchanged (band exits are then free).
    Once the band-node count has stabilized the start switches to the
    resolvent-preserving predictor, which keeps the singular structure
    intact instead of dumping it out of the narrowed bands. A stage that
    exhausts its Newton budget is retried once from the other start.

    Returns the recovered parameter u = H_gamma(p) at the final stage. If a
    stage fails even after the retry the continuation stops and the last
    successful stage is returned (MAX_NEWTON_EXCEEDED); reaching the gamma
    floor is the successful outcome (GAMMA_FLOOR).
    """
    grid = y_delta.grid
    if warm_start is None:
        cold = (ScalarField.zeros(grid), ScalarField.zeros(grid))
    else:
        cold = warm_start
    gamma = config.gamma0
    iters_per_stage: list[int] = []
    stage_terms: list[Termination] = []
    last_ok: SolverState | None = None
    overall = Termination.GAMMA_FLOOR
    predictor_on = False
    prev_band: int | None = None
    retried = 0
    newton_total = 0
    starts = [cold]
    while True:
        params = ProxParams(alpha, gamma)
        state_out = stage = None
        for attempt, (y0, p0) in enumerate(starts):
            state_in = SolverState(y0, p0, gamma, float("nan"))
            state_out, stage = solve_fixed_gamma(state_in, y_delta, params, U, config)
            newton_total += stage.iterations
            if stage.termination is not Termination.MAX_NEWTON_EXCEEDED:
                if attempt > 0:
                    retried += 1
                    predictor_on = not predictor_on
                break
        iters_per_stage.append(stage.iterations)
        stage_terms.append(stage.termination)
        if stage.termination is Termination.MAX_NEWTON_EXCEEDED:
            overall = Termination.MAX_NEWTON_EXCEEDED
            if last_ok is None:
                last_ok = state_out
            break
        band_now = prox_H_field(state_out.p, params, U)[1].size
        if prev_band is not None and abs(band_now - prev_band) <= (
            _BAND_STABLE_FRACTION * max(prev_band, 1)
        ):
            predictor_on = True
        prev_band = band_now
        last_ok = state_out
        next_gamma = gamma * config.gamma_factor
        if next_gamma < config.gamma_min:
            break
        if config.warm_start_stages:
            plain = (state_out.y, state_out.p)
            predicted = _predicted_start(state_out, params, U, next_gamma)
            starts = [predicted, plain] if predictor_on else [plain, predicted]
        else:
            starts = [cold]
        gamma = next_gamma
    u, band = prox_H_field(last_ok.p, ProxParams(alpha, last_ok.gamma), U)
    report = SolverReport(
        termination=overall,
        newton_iters_per_stage=iters_per_stage,
        stage_terminations=stage_terms,
        final_gamma=last_ok.gamma,
        final_residual=last_ok.residual_norm,
        singular_nodes=int(band.size),
        retried_stages=retried,
        newton_total=newton_total,
    )
    return SolveResult(u, last_ok, report)


@dataclass
class ClassifyResult:
    """Nodewise optimality-system labels; -1 marks singular nodes."""

    labels: np.ndarray
    band: np.ndarray
    singular_mask: np.ndarray

    @property
    def singular_count(self) -> int:
        return int(np.count_nonzero(self.singular_mask))


def classify_p(p: ScalarField, alpha: float, U: AdmissibleSet) -> ClassifyResult:
    """Classify dual values by the unregularized case distinction.

    Node x gets label i when p(x) falls strictly between the scaled
    midpoints alpha*(u_i + u_{i+1})/2; nodes within the snap tolerance of a
    midpoint are singular and report the bracketing pair through band. For
    alpha = 0 this reduces to the bang-bang rule (p < 0 -> u_1, p > 0 ->
    u_d, p = 0 undetermined).
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    t = alpha * U.midpoints
    snap_tol = 1e-10 * alpha * (U.hi - U.lo)
    q = p.data
    j = np.searchsorted(t, q)
    lo = np.clip(j - 1, 0, t.size - 1)
    hi = np.clip(j, 0, t.size - 1)
    pick = np.where(np.abs(q - t[lo]) <= np.abs(q - t[hi]), lo, hi)
    singular = np.abs(q - t[pick]) <= snap_tol
    labels = np.searchsorted(t, q, side="left").astype(np.int64)
    labels[singular] = -1
    band = np.where(singular, pick, -1).astype(np.int64)
    return ClassifyResult(labels, band, singular)
