"""Rank-based estimation of constant treatment effects in completely randomized experiments."""

__version__ = "0.1.0"

from .design import (
    AssignmentSpace,
    Experiment,
    PotentialOutcomes,
    draw_assignment,
    enumerate_assignments,
    realize,
)
from .errors import *  # noqa: F401,F403
from .estimators import (
    Estimate,
    InversionSolver,
    adjusted_wrs,
    diff_in_means,
    lin_interaction_estimator,
    ols_adjusted_estimator,
    rosenbaum_adjusted,
    rosenbaum_unadjusted,
)
from .ols import LeastSquaresFit, ols_fit
from .randtest import decomposition_check, null_distribution, p_value, test_inversion_ci
from .ranks import TiePolicy, rank, wrs_null_moments, wrs_statistic
from .theory import (
    DensitySpec,
    are_closed_form,
    are_numeric,
    breakdown_point_asymptotic,
    breakdown_point_finite,
    pilot_efficiency_estimate,
)
from .variance import (
    NuConfig,
    attach_rank_ci,
    i_hat_control_only,
    rank_ci,
    standard_error_from_functional,
    v_hat_plugin,
    w_hat_plugin,
)
