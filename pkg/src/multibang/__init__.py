"""Discrete-valued Tikhonov regularization of linear inverse problems.

Reconstructions are driven toward a prescribed set of parameter values by
a convex piecewise-affine penalty; the regularized optimality system is
solved by a path-following semismooth Newton method, and a Poisson
inverse-source experiment suite with discrepancy-principle parameter
choice reproduces the method's convergence behavior.
"""

from ._kernels import COMPILED as KERNELS_COMPILED
from .penalty import (
    AdmissibleSet,
    Interval,
    InvalidSubgradientError,
    ProxParams,
    G_value,
    bregman_G,
    bregman_g,
    g_value,
    newton_deriv_H,
    prox_H,
    prox_H_field,
    snap,
    strict_subgradient,
    subdiff_g,
    subdiff_g_star,
)
from .poisson import (
    Grid,
    GridMismatchError,
    LinearSolveOptions,
    ScalarField,
    SolverFailure,
    inner,
    laplacian_apply,
    norm_l2,
    poisson_solve,
    schur_newton_solve,
)
from .regpath import (
    DiscrepancyConfig,
    NoiseModel,
    StudyRow,
    errors_against_truth,
    make_noisy_data,
    run_noise_study,
    select_alpha_morozov,
)
from .ssn import (
    SolveResult,
    SolverConfig,
    SolverReport,
    SolverState,
    Termination,
    classify_p,
    newton_step,
    residual,
    solve_fixed_gamma,
    solve_with_continuation,
)

__version__ = "0.1.0"
