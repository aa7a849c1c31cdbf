"""Solvers for delay equations whose delay obeys its own ODE, and the time map that makes the delay constant."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .sdd import (
    InitialData,
    Params,
    SddSolution,
    delay_floor_certificate,
    deviating_argument,
    integrate_sdd,
    monotonicity_certificate,
    picard_iterates,
    picard_oracle,
    sigma_inverse,
    sigma_slope_floor,
)
from .trajectory import MonotoneFn, Trajectory, integrate_ode, invert_monotone
from .transform import (
    OmegaSpec,
    TimeMap,
    alpha_bounds_check,
    alpha_inverse,
    build_alpha,
    default_omega,
    make_omega,
    time_equivalence_constants,
)
from .transformed import (
    TransformedSolution,
    integrate_transformed,
    process_restart_check,
    recover_original,
    restart_from,
    restore_initial_history,
)
from .verify import (
    VerificationReport,
    alpha_convergence_experiment,
    assumption_A_estimates,
    boundedness_transfer_check,
    continuous_dependence_experiment,
    manifold_residual,
    stability_transfer_check,
    verify_equivalence,
)
