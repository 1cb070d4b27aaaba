"""Optimal control of semilinear elliptic PDEs whose nonlinearity is a
nonsmooth ReLU network (or any monotone piecewise-C1 function).

Layers: networks/nonlinearities -> grid discretization -> state solvers ->
optimizer -> stationarity checks -> study drivers/CLI.
"""

from .errors import (ConfigError, ConvergenceError, DimensionMismatch,
                     NetworkParseError, ParameterError, TruncationExceeded)
from .grid import (Grid, GridFunction, apply_laplacian, h1_seminorm,
                   holder_seminorm, inner_l2, norm_h1, norm_l2, norm_linf,
                   norm_y, poincare_estimate, solve_shifted_laplacian)
from .mollifier import BUMP_NORMALIZATION, Mollifier
from .network import (ReluNetwork, TrainResult, canonical_smooth_deriv,
                      canonical_smooth_value, construct_interpolant_net,
                      load_network, save_network, train_net)
from .nonlinearity import (CanonicalSmoothing, MollifiedSmoothing,
                           MonotonicityReport, Nonlinearity, check_monotone,
                           mollified_deriv_y, mollified_eval, smoothing_view)
from .optimize import (PathFollowResult, StepRule, extract_multipliers,
                       geometric_schedule, natural_residual, path_follow,
                       project_box, reduced_objective, smoothed_gradient,
                       solve_regularized)
from .statesolve import (ControlProblem, SolverSettings, StateSolveResult,
                         solve_adjoint, solve_sensitivity, solve_state,
                         solve_state_smoothed)
from .stationarity import (DEFAULT_TOLERANCES, StationarityReport,
                           assemble_verdicts, check_B, check_C, check_cq,
                           check_strong, check_weak,
                           directional_objective_derivative, exit_code,
                           sample_contingent_directions)

__version__ = "0.1.0"
