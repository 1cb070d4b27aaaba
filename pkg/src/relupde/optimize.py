"""Reduced objective, smoothed adjoint gradients, projected gradient descent,
and epsilon path-following to a candidate stationary triple (u, zeta, p)."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError, ParameterError
from .grid import GridFunction, inner_l2, norm_l2
from .mollifier import Mollifier
from .nonlinearity import CanonicalSmoothing, MollifiedSmoothing, smoothing_view
from .statesolve import solve_adjoint, solve_state, solve_state_smoothed


@dataclass
class StepRule:
    """Armijo backtracking parameters for projected gradient.

    The first trial step of each iteration grows geometrically from the
    last accepted step (capped), so well-conditioned problems do not crawl
    at unit steps; all constants are recorded in run configs."""
    initial: float = 1.0
    backtrack: float = 0.5
    sufficient_decrease: float = 1e-4
    grow: float = 2.0
    max_step: float = 1e8


@dataclass
class RegularizedSolveInfo:
    iterations: int
    natural_residual: float
    history: list  # rows (iter, J_eps, natural_residual)
    y_eps: GridFunction
    p_eps: GridFunction
    zeta: GridFunction


class PathFollowResult:
    """Final triple of the epsilon path plus per-level diagnostics.

    zeta is the smoothed derivative field at the final epsilon (no
    extrapolation), p solves the adjoint equation at the nonsmooth state,
    and the multipliers are extracted from p + alpha*u when bounds exist."""

    def __init__(self, u, y, zeta, p, mu_a, mu_b, epsilons, inner_iterations,
                 vi_residuals, objective_history, cauchy_increments, warnings,
                 state_result):
        self.u = u
        self.y = y
        self.zeta = zeta
        self.p = p
        self.mu_a = mu_a
        self.mu_b = mu_b
        self.epsilons = list(epsilons)
        self.inner_iterations = list(inner_iterations)
        self.vi_residuals = list(vi_residuals)
        self.objective_history = list(objective_history)  # rows (eps, iter, J, natres)
        self.cauchy_increments = list(cauchy_increments)
        self.warnings = tuple(warnings)
        self.state_result = state_result


def reduced_objective(problem, u, y0=None):
    """J(u) = 1/2 ||S(u) - g||^2 + alpha/2 ||u||^2 with the nonsmooth state."""
    res = solve_state(problem, u, y0=y0)
    return 0.5 * norm_l2(res.y - problem.g) ** 2 + 0.5 * problem.alpha * norm_l2(u) ** 2


def project_box(u, bounds):
    """Nodewise clamp onto [u_a, u_b]; identity when bounds is None."""
    if bounds is None:
        return u.copy()
    u_a, u_b = bounds
    return GridFunction(u.grid, np.minimum(np.maximum(u.values, u_a.values), u_b.values))


def _zeta_field(problem, view, y_eps):
    coords = problem.grid.coordinates()
    slopes = view.slope(coords, y_eps.values)
    # monotone f gives nonnegative slopes up to quadrature noise; the
    # adjoint solve requires a nonnegative coefficient
    return GridFunction(problem.grid, np.maximum(slopes, 0.0))


def smoothed_gradient(problem, smoothing, u, y0=None, allow_uncertified=False):
    """Gradient p_eps + alpha*u of the smoothed reduced objective.

    Solves the smoothed state, then the adjoint with coefficient
    zeta = d_y f_eps(x, y_eps(x)) and right-hand side y_eps - g.  (The
    localization term of the modified regularized problem is a proof device
    and is omitted.)  Returns (grad, y_eps, p_eps)."""
    state = solve_state_smoothed(problem, smoothing, u, y0=y0,
                                 allow_uncertified=allow_uncertified)
    view = smoothing_view(problem.nl, smoothing)
    zeta = _zeta_field(problem, view, state.y)
    p_eps = solve_adjoint(problem, zeta, state.y - problem.g)
    grad = GridFunction(problem.grid, p_eps.values + problem.alpha * u.values)
    return grad, state.y, p_eps


def _smoothed_objective_value(problem, u, y_state):
    return 0.5 * norm_l2(y_state - problem.g) ** 2 + 0.5 * problem.alpha * norm_l2(u) ** 2


def natural_residual(u, grad, bounds):
    """||u - proj(u - grad)||_2, the first-order optimality measure."""
    trial = GridFunction(u.grid, u.values - grad.values)
    return norm_l2(u - project_box(trial, bounds))


def solve_regularized(problem, smoothing, u0, step_rule=None, stop_tol=1e-7,
                      max_iters=2000, allow_uncertified=False):
    """Projected gradient descent on the smoothed reduced objective.

    u+ = proj(u - s * grad) with Armijo backtracking on J_eps; stops at
    natural residual <= stop_tol.  Returns (u, RegularizedSolveInfo); raises
    ConvergenceError carrying the residual history if the cap is hit."""
    rule = step_rule or StepRule()
    bounds = problem.bounds
    u = project_box(u0, bounds)
    view = smoothing_view(problem.nl, smoothing)

    state = solve_state_smoothed(problem, smoothing, u, allow_uncertified=allow_uncertified)
    y_eps = state.y
    J = _smoothed_objective_value(problem, u, y_eps)
    history = []
    step = rule.initial
    for it in range(int(max_iters) + 1):
        zeta = _zeta_field(problem, view, y_eps)
        p_eps = solve_adjoint(problem, zeta, y_eps - problem.g)
        grad = GridFunction(problem.grid, p_eps.values + problem.alpha * u.values)
        natres = natural_residual(u, grad, bounds)
        history.append((it, J, natres))
        if natres <= stop_tol:
            return u, RegularizedSolveInfo(it, natres, history, y_eps, p_eps, zeta)
        if it == int(max_iters):
            break
        t = min(step, rule.max_step)
        while True:
            u_t = project_box(GridFunction(u.grid, u.values - t * grad.values), bounds)
            move = norm_l2(u_t - u)
            state_t = solve_state_smoothed(problem, smoothing, u_t, y0=y_eps,
                                           allow_uncertified=allow_uncertified)
            J_t = _smoothed_objective_value(problem, u_t, state_t.y)
            if J_t <= J - rule.sufficient_decrease / t * move ** 2 or move == 0.0:
                break
            t *= rule.backtrack
            if t < 1e-14:
                raise ConvergenceError(
                    f"projected-gradient line search failed at iteration {it} "
                    f"(natural residual {natres:.3e})",
                    trace=[row[2] for row in history])
        u, y_eps, J = u_t, state_t.y, J_t
        step = min(t * rule.grow, rule.max_step)
    raise ConvergenceError(
        f"projected gradient hit the iteration cap {max_iters} "
        f"(natural residual {history[-1][2]:.3e})",
        trace=[row[2] for row in history])


def extract_multipliers(u, p, alpha, bounds):
    """Box multipliers mu = -(p + alpha u), split into nonnegative parts.

    Returns (mu_a, mu_b, residuals) where residuals holds the sup-norm
    complementarity defects mu_a*(u_a - u) and mu_b*(u - u_b)."""
    if bounds is None:
        raise ParameterError("multiplier extraction needs box bounds")
    u_a, u_b = bounds
    mu = -(p.values + alpha * u.values)
    mu_b = np.maximum(mu, 0.0)
    mu_a = np.maximum(-mu, 0.0)
    res = {
        "complementarity_a": float(np.max(np.abs(mu_a * (u_a.values - u.values)))),
        "complementarity_b": float(np.max(np.abs(mu_b * (u.values - u_b.values)))),
    }
    return GridFunction(u.grid, mu_a), GridFunction(u.grid, mu_b), res


def _make_smoothing(family, eps, mollifier_panels):
    if family == "mollified":
        return MollifiedSmoothing(Mollifier(eps, quad_nodes=mollifier_panels))
    if family == "canonical":
        return CanonicalSmoothing(eps)
    raise ParameterError(f"unknown smoothing family {family!r}")


def path_follow(problem, smoothing_family, eps_schedule, u0, stop_tol=1e-7,
                step_rule=None, max_iters=2000, mollifier_panels=64,
                allow_uncertified=False):
    """Warm-started regularized solves along a decreasing epsilon schedule.

    The final triple re-solves the nonsmooth state at the last control,
    takes zeta as the last smoothed derivative field, and solves the
    adjoint equation at the nonsmooth state.  Cauchy increments between
    consecutive levels are recorded; a growing increment raises a warning
    flag (the path is a heuristic diagnostic, not a convergence proof)."""
    eps_schedule = [float(e) for e in eps_schedule]
    if not eps_schedule or any(e <= 0 for e in eps_schedule):
        raise ParameterError("eps schedule must be positive")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ParameterError("eps schedule must be strictly decreasing")

    u = project_box(u0, problem.bounds)
    warnings = []
    inner_iterations = []
    vi_residuals = []
    objective_history = []
    increments = []
    info = None
    for eps in eps_schedule:
        smoothing = _make_smoothing(smoothing_family, eps, mollifier_panels)
        u_new, info = solve_regularized(problem, smoothing, u, step_rule=step_rule,
                                        stop_tol=stop_tol, max_iters=max_iters,
                                        allow_uncertified=allow_uncertified)
        inner_iterations.append(info.iterations)
        vi_residuals.append(info.natural_residual)
        objective_history.extend((eps, it, J, nr) for it, J, nr in info.history)
        increments.append(norm_l2(u_new - u))
        u = u_new
    if len(increments) > 2 and any(b > a for a, b in zip(increments[1:], increments[2:])):
        warnings.append("path increments are not monotonically decreasing (non-Cauchy)")

    state = solve_state(problem, u, y0=info.y_eps,
                        allow_uncertified=allow_uncertified)
    zeta = info.zeta
    p = solve_adjoint(problem, zeta, state.y - problem.g)
    if problem.bounds is not None:
        mu_a, mu_b, _ = extract_multipliers(u, p, problem.alpha, problem.bounds)
    else:
        mu_a = mu_b = None
    return PathFollowResult(u, state.y, zeta, p, mu_a, mu_b, eps_schedule,
                            inner_iterations, vi_residuals, objective_history,
                            increments[1:], warnings, state)


def geometric_schedule(eps_max, eps_min, levels):
    """Strictly decreasing geometric schedule from eps_max to eps_min."""
    if levels < 1 or eps_max <= 0 or eps_min <= 0 or eps_min >= eps_max:
        raise ParameterError("need eps_max > eps_min > 0 and levels >= 1")
    if levels == 1:
        return [eps_min]
    r = (eps_min / eps_max) ** (1.0 / (levels - 1))
    return [eps_max * r ** j for j in range(levels)]
