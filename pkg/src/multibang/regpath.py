"""Noise synthesis, Morozov parameter choice, and the delta-ladder study.

The study follows the noise level down a geometric ladder: for each
relative level the data is perturbed with seeded Gaussian noise, the
regularization weight alpha is selected by the discrepancy principle
(residual in (delta, tau*delta]), and the reconstruction errors are
recorded. All randomness flows through a counter-based Philox generator
feeding a Box-Muller transform, so studies are reproducible bit for bit
from the seed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .penalty import AdmissibleSet
from .poisson import (
    LinearSolveOptions,
    ScalarField,
    SolverFailure,
    _check_same_grid,
    norm_l2,
    poisson_solve,
)
from .ssn import (
    SolveResult,
    SolverConfig,
    SolverReport,
    SolverState,
    Termination,
    solve_with_continuation,
)

#: Data y = K u_true is manufactured at this tolerance (tighter than the
#: solves that invert it; the inverse crime is deliberate).
DATA_SOLVE_TOL = 1e-12


@dataclass(frozen=True)
class NoiseModel:
    rel_levels: tuple = tuple(2.0**-k for k in range(0, 21))
    seed: int = 0

    def __post_init__(self):
        lv = np.asarray(self.rel_levels, dtype=float)
        if lv.size == 0 or np.any(lv <= 0) or np.any(np.diff(lv) >= 0):
            raise ValueError("rel_levels must be positive and strictly decreasing")


@dataclass(frozen=True)
class DiscrepancyConfig:
    tau: float = 1.1
    alpha0: float = 1e-2
    alpha_factor: float = 0.5
    alpha_min: float = 1e-12
    warm_start: bool = True  # reuse (y, p) across the alpha sweep

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError("tau must exceed 1")
        if not self.alpha0 > self.alpha_min > 0:
            raise ValueError("need alpha0 > alpha_min > 0")
        if not 0 < self.alpha_factor < 1:
            raise ValueError("alpha_factor must lie in (0, 1)")


@dataclass(frozen=True)
class StudyRow:
    """One line of the convergence table (plus bookkeeping columns)."""

    delta_rel: float
    delta_eff: float
    delta_raw: float
    alpha: float
    e2: float
    e2_raw: float
    einf: float
    singular_nodes: int
    newton_total: int
    residual: float
    flags: tuple = ()


def standard_normals(count: int, seed: int) -> np.ndarray:
    """Seeded N(0,1) variates: Philox uniforms through Box-Muller (no inverse CDF)."""
    gen = np.random.Generator(np.random.Philox(seed))
    m = (count + 1) // 2
    u1 = gen.random(m)
    u2 = gen.random(m)
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:count]


def make_noisy_data(
    y_true: ScalarField, delta_rel: float, seed: int
) -> tuple[ScalarField, float]:
    """Perturb data nodewise by delta_rel * max|y_true| * xi with xi ~ N(0,1).

    Returns the perturbed field and the effective noise level (weighted L2
    norm of the perturbation). Identical seeds reproduce identical fields.
    """
    if not delta_rel > 0:
        raise ValueError("delta_rel must be positive")
    scale = delta_rel * float(np.max(np.abs(y_true.data)))
    xi = standard_normals(y_true.grid.size, seed)
    noise = scale * xi
    y_delta = ScalarField(y_true.grid, y_true.data + noise)
    delta_eff = float(np.sqrt(y_true.grid.quad_weight) * np.linalg.norm(noise))
    return y_delta, delta_eff


def errors_against_truth(u: ScalarField, u_true: ScalarField) -> tuple[float, float]:
    """(weighted L2 error, max nodewise error) against the true parameter."""
    _check_same_grid(u, u_true)
    diff = u.data - u_true.data
    e2 = float(np.sqrt(u.grid.quad_weight) * np.linalg.norm(diff))
    return e2, float(np.max(np.abs(diff)))


def select_alpha_morozov(
    y_delta: ScalarField,
    delta_eff: float,
    U: AdmissibleSet,
    dcfg: DiscrepancyConfig = DiscrepancyConfig(),
    scfg: SolverConfig = SolverConfig(),
) -> tuple[float, SolveResult, StudyRow]:
    """Halve alpha from alpha0 until the residual ||K u - y_delta|| drops
    into (delta, tau*delta]; returns the first such alpha.

    Rows are flagged instead of raising: 'over_resolved' when the accepted
    residual is already <= delta, 'exhausted' when alpha_min is reached
    without acceptance, 'max_newton' / 'solver_failure' for solver trouble.
    """
    if not delta_eff > 0:
        raise ValueError("delta_eff must be positive")
    alpha = dcfg.alpha0
    warm = None
    newton_total = 0
    flags: list[str] = []
    result = None
    res = float("nan")
    while True:
        try:
            attempt = solve_with_continuation(y_delta, alpha, U, scfg, warm_start=warm)
        except SolverFailure:
            flags.append("solver_failure")
            if result is None:
                zero = ScalarField.zeros(y_delta.grid)
                res = norm_l2(y_delta)  # ||K 0 - y_delta||
                result = SolveResult(
                    zero,
                    SolverState(zero, zero, scfg.gamma0, float("nan")),
                    SolverReport(
                        Termination.MAX_NEWTON_EXCEEDED, [], [], scfg.gamma0,
                        float("nan"), 0,
                    ),
                )
            else:
                alpha = alpha / dcfg.alpha_factor  # row reports the last solved alpha
            break
        result = attempt
        newton_total += result.report.newton_total
        if result.report.termination is Termination.MAX_NEWTON_EXCEEDED:
            if "max_newton" not in flags:
                flags.append("max_newton")
        ku = poisson_solve(result.u, scfg.lin_opts)
        res = norm_l2(ScalarField(y_delta.grid, ku.data - y_delta.data))
        if res <= dcfg.tau * delta_eff:
            if res <= delta_eff:
                flags.append("over_resolved")
            break
        next_alpha = alpha * dcfg.alpha_factor
        if next_alpha < dcfg.alpha_min:
            flags.append("exhausted")
            break
        alpha = next_alpha
        if dcfg.warm_start:
            warm = (result.state.y, result.state.p)
    row = StudyRow(
        delta_rel=float("nan"),
        delta_eff=delta_eff,
        delta_raw=float("nan"),
        alpha=alpha,
        e2=float("nan"),
        e2_raw=float("nan"),
        einf=float("nan"),
        singular_nodes=result.report.singular_nodes,
        newton_total=newton_total,
        residual=res,
        flags=tuple(flags),
    )
    return alpha, result, row


def run_noise_study(
    u_true: ScalarField,
    U: AdmissibleSet,
    noise: NoiseModel = NoiseModel(),
    dcfg: DiscrepancyConfig = DiscrepancyConfig(),
    scfg: SolverConfig = SolverConfig(),
    on_row=None,
) -> list[StudyRow]:
    """Run the delta ladder: noisy data, Morozov alpha, error metrics per level.

    Row i perturbs the data with seed noise.seed + i, so ladder entries are
    independent and the whole study is deterministic given the seed. The
    optional on_row(index, row, solve_result) callback sees each completed
    row (used by the CLI to write per-row images).
    """
    y_true = poisson_solve(u_true, LinearSolveOptions(rel_tol=DATA_SOLVE_TOL))
    rows = []
    for i, level in enumerate(noise.rel_levels):
        y_delta, delta_eff = make_noisy_data(y_true, level, noise.seed + i)
        alpha, result, row = select_alpha_morozov(y_delta, delta_eff, U, dcfg, scfg)
        e2, einf = errors_against_truth(result.u, u_true)
        row = dataclasses.replace(
            row,
            delta_rel=level,
            delta_raw=float(np.linalg.norm(y_delta.data - y_true.data)),
            e2=e2,
            e2_raw=float(np.linalg.norm(result.u.data - u_true.data)),
            einf=einf,
        )
        rows.append(row)
        if on_row is not None:
            on_row(i, row, result)
    return rows
