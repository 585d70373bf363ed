"""Independent brute-force oracles and the self-check suite.

Every derived expected value in the test suite is produced by one of these
routines before being asserted against the main implementation. The
oracles deliberately avoid sharing reasoning with the code they check:
the prox is located by grid search plus a golden-section pass instead of
the threshold tables, directional derivatives by finite differences, and
the Newton block system by dense LU factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import penalty, poisson
from .penalty import AdmissibleSet, ProxParams
from .poisson import Grid, LinearSolveOptions, ScalarField

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OracleConfig:
    prox_grid_points: int = 200001
    fd_step: float = 1e-8
    dense_n_max: int = 4

    def __post_init__(self):
        if self.prox_grid_points < 3 or self.fd_step <= 0 or self.dense_n_max < 3:
            raise ValueError("oracle parameters out of range")


@dataclass(frozen=True)
class ProxOracleResult:
    value: float
    resolution: float


class ProxOracle:
    """Grid-search prox with cached penalty samples for repeated queries."""

    def __init__(self, U: AdmissibleSet, cfg: OracleConfig = OracleConfig()):
        self.U = U
        self.cfg = cfg
        span = (U.hi + 1.0) - (U.lo - 1.0)
        self.cell = span / (cfg.prox_grid_points - 1)
        assert self.cell < 1e-4 * span, "prox oracle grid too coarse"
        self.x = np.linspace(U.lo - 1.0, U.hi + 1.0, cfg.prox_grid_points)
        self.gx = penalty.g_value_array(self.x, U)
        self.x_sq = self.x * self.x

    def __call__(self, p: float, params: ProxParams) -> ProxOracleResult:
        phi = params.alpha * self.gx + (0.5 * params.gamma) * self.x_sq - p * self.x
        k = int(np.argmin(phi))
        a = max(self.x[max(k - 1, 0)], self.U.lo)
        b = min(self.x[min(k + 1, self.x.size - 1)], self.U.hi)

        def f(v):
            return (
                params.alpha * penalty.g_value(v, self.U)
                + 0.5 * params.gamma * v * v
                - p * v
            )

        # one golden-section pass narrows the winning cell pair
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        if f(c) < f(d):
            b = d
        else:
            a = c
        pts = [a, b, 0.5 * (a + b)]
        best = min(pts, key=f)
        return ProxOracleResult(float(best), float(b - a))


def prox_bruteforce(
    p: float, params: ProxParams, U: AdmissibleSet, cfg: OracleConfig = OracleConfig()
) -> ProxOracleResult:
    """Argmin of alpha*g(u) + (gamma/2)u^2 - p*u located without the closed form."""
    return ProxOracle(U, cfg)(p, params)


def fd_directional(
    pfield: ScalarField,
    hfield: ScalarField,
    params: ProxParams,
    U: AdmissibleSet,
    cfg: OracleConfig = OracleConfig(),
) -> ScalarField:
    """Finite-difference surrogate for the prox Newton derivative."""
    t = cfg.fd_step * (1.0 + float(np.max(np.abs(pfield.data))))
    shifted = ScalarField(pfield.grid, pfield.data + t * hfield.data)
    u1, _ = penalty.prox_H_field(shifted, params, U)
    u0, _ = penalty.prox_H_field(pfield, params, U)
    return ScalarField(pfield.grid, (u1.data - u0.data) / t)


def threshold_distances(
    pfield: ScalarField, params: ProxParams, U: AdmissibleSet
) -> np.ndarray:
    """Nodewise distance from p to the nearest transition-band edge."""
    t = penalty.ProxTables(params, U).thresholds
    j = np.searchsorted(t, pfield.data)
    lo = np.clip(j - 1, 0, t.size - 1)
    hi = np.clip(j, 0, t.size - 1)
    return np.minimum(
        np.abs(pfield.data - t[lo]), np.abs(pfield.data - t[hi])
    )


def dense_stencil_matrix(grid: Grid) -> np.ndarray:
    """Dense 5-point -Laplacian for small grids (oracle use only)."""
    n = grid.n
    inv_h2 = 1.0 / grid.quad_weight
    N = n * n
    A = np.zeros((N, N))
    for j in range(n):
        for i in range(n):
            k = j * n + i
            A[k, k] = 4.0 * inv_h2
            if j > 0:
                A[k, k - n] = -inv_h2
            if j < n - 1:
                A[k, k + n] = -inv_h2
            if i > 0:
                A[k, k - 1] = -inv_h2
            if i < n - 1:
                A[k, k + 1] = -inv_h2
    return A


def dense_block_solve(
    dN_diag: ScalarField,
    r1: ScalarField,
    r2: ScalarField,
    cfg: OracleConfig = OracleConfig(),
) -> tuple[ScalarField, ScalarField]:
    """Assemble the full symmetric Newton block matrix and solve it directly."""
    grid = r1.grid
    if grid.n > cfg.dense_n_max:
        raise ValueError(f"dense oracle limited to n <= {cfg.dense_n_max}")
    N = grid.size
    A = dense_stencil_matrix(grid)
    M = np.zeros((2 * N, 2 * N))
    M[:N, :N] = np.eye(N)
    M[:N, N:] = A
    M[N:, :N] = A
    M[N:, N:] = -np.diag(dN_diag.data)
    rhs = np.concatenate([-r1.data, -r2.data])
    sol = np.linalg.solve(M, rhs)
    return ScalarField(grid, sol[:N]), ScalarField(grid, sol[N:])


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def sample_subgradient(rng, v: float, U: AdmissibleSet) -> float:
    """Random element of subdiff_g(v); unbounded ends clipped to the value range."""
    iv = penalty.subdiff_g(v, U)
    if iv.is_empty:
        raise ValueError(f"{v} outside effective domain")
    if iv.lower == iv.upper:
        return iv.lower
    a = max(iv.lower, U.lo - 1.0)
    b = min(iv.upper, U.hi + 1.0)
    return float(rng.uniform(a, b))


def _check_penalty_identities(rng, U: AdmissibleSet, samples: int) -> list[CheckResult]:
    vals = U.values
    lo, hi = U.lo, U.hi
    span = hi - lo
    conj_detail = breg_detail = lemma_detail = "ok"
    conj_ok = breg_ok = lemma_ok = True
    three_worst = 0.0
    for _ in range(samples):
        v = lo + span * rng.random()
        if rng.random() < 0.3:
            v = float(vals[rng.integers(U.d)])
        q = sample_subgradient(rng, v, U)
        if not penalty.subdiff_g_star(q, U).contains(v):
            conj_ok, conj_detail = False, f"q={q} in dg({v}) but v not in dg*(q)"
            break
        q_r = float(rng.uniform(lo - 1, hi + 1))
        star = penalty.subdiff_g_star(q_r, U)
        v_r = float(rng.uniform(star.lower, star.upper)) if rng.random() < 0.5 else star.lower
        if not penalty.subdiff_g(v_r, U).contains(q_r):
            conj_ok, conj_detail = False, f"v={v_r} in dg*({q_r}) but q not in dg(v)"
            break
        v2 = lo + span * rng.random()
        d = penalty.bregman_g(v2, v, q, U)
        if not d >= 0.0:
            breg_ok, breg_detail = False, f"negative distance {d}"
            break
        v3 = lo + span * rng.random()
        q2 = sample_subgradient(rng, v2, U)
        lhs = penalty.bregman_g(v3, v, q, U)
        rhs = (
            penalty.bregman_g(v3, v2, q2, U)
            + penalty.bregman_g(v2, v, q, U)
            + (q2 - q) * (v3 - v2)
        )
        three_worst = max(three_worst, abs(lhs - rhs))
        i = rng.integers(U.d - 1)
        vd = float(rng.uniform(vals[i], vals[i + 1]))
        mid = float(U.midpoints[i])
        vv = float(rng.uniform(vals[i], vals[i + 1]))
        if penalty.bregman_g(vv, vd, mid, U) != 0.0:
            lemma_ok, lemma_detail = False, f"nonzero on segment {i}"
            break
    return [
        CheckResult("penalty_conjugacy", conj_ok, conj_detail),
        CheckResult("bregman_nonnegative", breg_ok, breg_detail),
        CheckResult(
            "three_point_identity", three_worst <= 1e-12, f"worst defect {three_worst:.2e}"
        ),
        CheckResult("lemma_zero_bregman", lemma_ok, lemma_detail),
    ]


def _check_prox(rng, U: AdmissibleSet, samples: int) -> CheckResult:
    oracle = ProxOracle(U)
    worst = 0.0
    for _ in range(samples):
        alpha = 10.0 ** rng.uniform(-9, -1)
        gamma = 10.0 ** rng.uniform(-12, 0)
        params = ProxParams(alpha, gamma)
        tables = penalty.ProxTables(params, U)
        t = tables.thresholds
        spread = max(float(t[-1] - t[0]), 1e-6)
        p = float(rng.uniform(t[0] - spread, t[-1] + spread))
        ref = oracle(p, params)
        got = penalty.prox_H(p, params, U)
        err = abs(got - ref.value)
        worst = max(worst, err / max(ref.resolution, 1e-300))
        if err > 2.0 * ref.resolution:
            return CheckResult(
                "prox_matches_bruteforce",
                False,
                f"prox mismatch at p={p}, alpha={alpha}, gamma={gamma}: "
                f"{got} vs {ref.value} (resolution {ref.resolution:.2e})",
            )
    return CheckResult(
        "prox_matches_bruteforce", True, f"worst error {worst:.3f} resolutions"
    )


def _check_prox_monotone(rng, U: AdmissibleSet) -> CheckResult:
    params = ProxParams(10.0 ** rng.uniform(-4, -1), 10.0 ** rng.uniform(-4, 0))
    t = penalty.ProxTables(params, U).thresholds
    p = np.sort(rng.uniform(t[0] - 1, t[-1] + 1, size=4000))
    u = np.array([penalty.prox_H(float(q), params, U) for q in p])
    du = np.diff(u)
    dp = np.diff(p)
    if np.any(du < 0):
        return CheckResult("prox_monotone_lipschitz", False, "not monotone")
    if np.any(du > dp / params.gamma * (1 + 1e-12) + 1e-15):
        return CheckResult("prox_monotone_lipschitz", False, "Lipschitz bound broken")
    return CheckResult("prox_monotone_lipschitz", True, "ok")


def _check_newton_derivative(rng, samples: int) -> CheckResult:
    U = AdmissibleSet((0.0, 0.1, 0.15))
    grid = Grid(16)
    worst = 0.0
    for _ in range(samples):
        params = ProxParams(10.0 ** rng.uniform(-5, -1), 10.0 ** rng.uniform(-4, 0))
        tables = penalty.ProxTables(params, U)
        t = tables.thresholds
        p = ScalarField(grid, rng.uniform(t[0] - 0.5, t[-1] + 0.5, size=grid.size))
        h = ScalarField(grid, rng.standard_normal(grid.size))
        eligible = threshold_distances(p, params, U) > 1e-6
        if not np.any(eligible):
            continue
        fd = fd_directional(p, h, params, U)
        an = penalty.newton_deriv_H(p, h, params, U)
        scale = np.maximum(np.abs(an.data[eligible]), 1.0)
        err = float(np.max(np.abs(fd.data[eligible] - an.data[eligible]) / scale))
        worst = max(worst, err)
        if err > 1e-6:
            return CheckResult(
                "newton_derivative_fd", False, f"relative error {err:.2e}"
            )
    return CheckResult("newton_derivative_fd", True, f"worst rel error {worst:.2e}")


def _check_schur_dense(rng, samples: int) -> CheckResult:
    worst = 0.0
    for k in range(samples):
        grid = Grid(3 + (k % 2))
        gamma = 10.0 ** rng.uniform(-6, 0)
        d = ScalarField(
            grid, np.where(rng.random(grid.size) < 0.5, 1.0 / gamma, 0.0)
        )
        r1 = ScalarField(grid, rng.standard_normal(grid.size))
        r2 = ScalarField(grid, rng.standard_normal(grid.size))
        dy1, dp1 = poisson.schur_newton_solve(d, r1, r2)
        dy2, dp2 = dense_block_solve(d, r1, r2)
        scale = np.linalg.norm(np.concatenate([dy2.data, dp2.data]))
        err = float(
            np.linalg.norm(
                np.concatenate([dy1.data - dy2.data, dp1.data - dp2.data])
            )
            / max(scale, 1e-300)
        )
        worst = max(worst, err)
        if err > 1e-8:
            return CheckResult("schur_matches_dense", False, f"rel error {err:.2e}")
    return CheckResult("schur_matches_dense", True, f"worst rel error {worst:.2e}")


def _check_laplacian() -> list[CheckResult]:
    grid = Grid(16)
    f = ScalarField.from_function(
        grid, lambda x1, x2: np.sin(np.pi * x1) * np.sin(np.pi * x2)
    )
    lam = (4.0 - 4.0 * np.cos(np.pi * grid.h)) / grid.quad_weight
    err = float(np.max(np.abs(poisson.laplacian_apply(f).data - lam * f.data)))
    eig = CheckResult(
        "laplacian_eigenvector", err <= 1e-9 * lam, f"max defect {err:.2e}"
    )
    rng = np.random.default_rng(7)
    u = ScalarField(grid, rng.standard_normal(grid.size))
    v = ScalarField(grid, rng.standard_normal(grid.size))
    a = poisson.inner(poisson.laplacian_apply(u), v)
    b = poisson.inner(u, poisson.laplacian_apply(v))
    sym = CheckResult(
        "laplacian_symmetry",
        abs(a - b) <= 1e-12 * max(abs(a), abs(b), 1.0),
        f"<Au,v>={a:.6e} <u,Av>={b:.6e}",
    )
    return [eig, sym]


def _check_poisson_convergence() -> CheckResult:
    errs = []
    for n in (16, 32):
        grid = Grid(n)
        f = ScalarField.from_function(
            grid,
            lambda x1, x2: 2.0 * np.pi**2 * np.sin(np.pi * x1) * np.sin(np.pi * x2),
        )
        y = poisson.poisson_solve(f, LinearSolveOptions(rel_tol=1e-12))
        exact = ScalarField.from_function(
            grid, lambda x1, x2: np.sin(np.pi * x1) * np.sin(np.pi * x2)
        )
        errs.append(float(np.max(np.abs(y.data - exact.data))))
    ratio = errs[0] / errs[1]
    return CheckResult(
        "poisson_manufactured_convergence",
        3.0 <= ratio <= 5.0,
        f"error ratio 16->32: {ratio:.3f}",
    )


def run_checks(seed: int = 0, samples: int = 20000) -> list[CheckResult]:
    """Full oracle-backed check suite (the 'validate' subcommand)."""
    rng = np.random.default_rng(seed)
    sets = [
        AdmissibleSet((0.0, 1.0, 2.0)),
        AdmissibleSet((0.0, 0.1, 0.15)),
        AdmissibleSet((0.0, 0.1, 0.11)),
    ]
    results: list[CheckResult] = []
    results.extend(_check_laplacian())
    results.append(_check_poisson_convergence())
    for U in sets:
        results.extend(_check_penalty_identities(rng, U, samples // len(sets)))
    results.append(_check_prox(rng, sets[0], 1200))
    results.append(_check_prox_monotone(rng, sets[1]))
    results.append(_check_newton_derivative(rng, 8))
    results.append(_check_schur_dense(rng, 10))
    return results
