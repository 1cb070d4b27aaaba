"""Solvers for the nonsmooth state equation and its companions.

-Delta_h y + f(x, y) = u is solved by semismooth Newton with nodewise
slopes from the Clarke interval (right derivative at kinks), Armijo
damping on the squared residual, and a Picard fallback.  The same driver
handles the C^1 smoothed equations, the sensitivity equation (piecewise
linear in the unknown), and the linear adjoint equations.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ConvergenceError, ParameterError, TruncationExceeded
from .grid import (GridFunction, _check_same_grid, _neg_laplacian_values,
                   norm_l2, norm_linf, solve_shifted_laplacian)
from .nonlinearity import smoothing_view

_ARMIJO_DECREASE = 1e-4
_MIN_STEP = 2.0 ** -30


@dataclass
class SolverSettings:
    newton_tol: float = 1e-11
    newton_max: int = 60
    cg_tol: float = 1e-12
    cg_max: Optional[int] = None
    truncation_level: Optional[float] = None

    def __post_init__(self):
        if self.newton_tol <= 0 or self.cg_tol <= 0:
            raise ParameterError("solver tolerances must be positive")
        if self.newton_max < 1:
            raise ParameterError("newton_max must be >= 1")
        if self.truncation_level is not None and self.truncation_level <= 0:
            raise ParameterError("truncation_level must be positive")


@dataclass
class ControlProblem:
    """Domain, nonlinearity, tracking target g, control cost alpha, optional
    box bounds (u_a, u_b), and solver tolerances.

    All optimization-facing norms are discrete L2 (the continuum p > d/2
    exponent is a regularity device; see docs)."""
    grid: object
    nl: object
    g: GridFunction
    alpha: float
    bounds: Optional[Tuple[GridFunction, GridFunction]] = None
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        _check_same_grid(self.g, self.grid.zeros())
        if self.nl.kind == "network" and self.nl._net.spatial_dim != self.grid.dim:
            raise ParameterError(
                f"network expects {self.nl._net.spatial_dim} spatial inputs "
                f"but the grid is {self.grid.dim}-dimensional")
        if self.bounds is not None:
            u_a, u_b = self.bounds
            _check_same_grid(u_a, self.g)
            _check_same_grid(u_b, self.g)
            gap = u_b.values - u_a.values
            if np.any(gap <= 0):
                k = int(np.argmin(gap))
                raise ParameterError(
                    f"bounds must satisfy u_a < u_b nodewise; node {k} has gap {gap[k]:.3e}")


@dataclass
class StateSolveResult:
    y: GridFunction
    iterations: int
    final_residual: float
    linf_bound_used: float
    truncation_active: bool = False
    warnings: tuple = ()
    trace: tuple = ()


class _TruncatedField:
    """f_k(x, y) = f(x, clip(y, -k, k)); slope zero outside the band."""

    def __init__(self, nl, coords, level):
        self.nl = nl
        self.coords = coords
        self.level = level

    def value(self, y):
        return self.nl.value(self.coords, np.clip(y, -self.level, self.level))

    def slope(self, y):
        _, plus = self.nl.one_sided_derivs(self.coords, np.clip(y, -self.level, self.level))
        inside = (y >= -self.level) & (y < self.level)
        return np.where(inside, plus, 0.0)


class _PlainField:
    def __init__(self, nl, coords):
        self.nl = nl
        self.coords = coords

    def value(self, y):
        return self.nl.value(self.coords, y)

    def slope(self, y):
        _, plus = self.nl.one_sided_derivs(self.coords, y)
        return plus


class _SmoothedField:
    def __init__(self, view, coords):
        self.view = view
        self.coords = coords

    def value(self, y):
        return self.view.value(self.coords, y)

    def slope(self, y):
        return self.view.slope(self.coords, y)


def _newton(grid, field, rhs, settings, y0):
    """Damped (semismooth) Newton for -Delta_h y + field(y) = rhs."""
    scale = np.sqrt(grid.cell_measure)
    tol_abs = settings.newton_tol * (1.0 + scale * np.linalg.norm(rhs))
    y = y0.copy()

    def residual(yv):
        return _neg_laplacian_values(grid, yv) + field.value(yv) - rhs

    res = residual(y)
    rn = scale * np.linalg.norm(res)
    trace = [rn]
    iterations = 0
    for _ in range(settings.newton_max):
        if rn <= tol_abs:
            return y, iterations, rn, trace
        iterations += 1
        c = np.maximum(field.slope(y), 0.0)
        delta = solve_shifted_laplacian(grid, c, -res, tol=settings.cg_tol,
                                        max_iter=settings.cg_max).values
        t = 1.0
        phi0 = rn * rn
        accepted = False
        while t >= _MIN_STEP:
            y_t = y + t * delta
            res_t = residual(y_t)
            rn_t = scale * np.linalg.norm(res_t)
            if rn_t * rn_t <= (1.0 - 2.0 * _ARMIJO_DECREASE * t) * phi0:
                y, res, rn = y_t, res_t, rn_t
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # Picard fallback: contraction for any L dominating the slopes
            L = max(2.0 * float(np.max(field.slope(y))), 1.0)
            pic_rhs = rhs - field.value(y) + L * y
            y = solve_shifted_laplacian(grid, L, pic_rhs, tol=settings.cg_tol,
                                        max_iter=settings.cg_max).values
            res = residual(y)
            rn = scale * np.linalg.norm(res)
        trace.append(rn)
    if rn <= tol_abs:
        return y, iterations, rn, trace
    raise ConvergenceError(
        f"state Newton stalled at residual {rn:.3e} (target {tol_abs:.3e}) "
        f"after {iterations} iterations", trace=trace)


def _initial_state(problem, u_vals, y0):
    if y0 is not None:
        return (y0.values if isinstance(y0, GridFunction) else np.asarray(y0)).copy()
    # linearization at zero (nonlinear correction omitted)
    return solve_shifted_laplacian(problem.grid, 0.0, u_vals,
                                   tol=problem.solver.cg_tol,
                                   max_iter=problem.solver.cg_max).values


def solve_state(problem, u, allow_uncertified=False, y0=None):
    """Solve -Delta_h y + f(x, y) = u on the grid.

    Requires a monotonicity-certified nonlinearity unless the caller
    acknowledges the risk.  With a truncation level k set, f is replaced by
    its clamped version and the result is only accepted while the state
    stays strictly inside the band (otherwise TruncationExceeded)."""
    if not problem.nl.monotone_certified and not allow_uncertified:
        raise ParameterError(
            "nonlinearity is not monotonicity-certified; run check_monotone "
            "or pass allow_uncertified=True")
    _check_same_grid(u, problem.g)
    coords = problem.grid.coordinates()
    level = problem.solver.truncation_level
    if level is None:
        fld = _PlainField(problem.nl, coords)
    else:
        fld = _TruncatedField(problem.nl, coords, level)
    y, its, rn, trace = _newton(problem.grid, fld, u.values, problem.solver,
                                _initial_state(problem, u.values, y0))
    linf = float(np.max(np.abs(y)))
    if level is not None and linf >= level:
        raise TruncationExceeded(linf, level)
    return StateSolveResult(GridFunction(problem.grid, y), its, rn, linf,
                            truncation_active=False, trace=tuple(trace))


def _canonical_monotonicity_recheck(view, problem, y_ref):
    """Sample the canonical smoothing's slope field; the activation blend
    can break whole-network monotonicity (paper caveat)."""
    coords = problem.grid.coordinates()
    take = max(1, coords.shape[0] // 64)
    xs = coords[::take]
    M = max(1.0, 1.5 * float(np.max(np.abs(y_ref))))
    ys = np.linspace(-M, M, 101)
    n = xs.shape[0]
    X = np.repeat(xs, ys.size, axis=0)
    Y = np.tile(ys, n)
    slopes = view.slope(X, Y)
    min_slope = float(np.min(slopes))
    if min_slope < -1e-12:
        frac = float(np.mean(slopes < -1e-12))
        return (f"canonical smoothing is not monotone on the sampled window "
                f"(min slope {min_slope:.3e}, negative at {frac:.1%} of samples); "
                f"solve attempted anyway",)
    return ()


def solve_state_smoothed(problem, smoothing, u, allow_uncertified=False, y0=None):
    """Solve the smoothed state equation (mollified or canonical smoothing).

    Mollification preserves monotonicity; canonical smoothing forces a
    monotonicity re-check whose failure is recorded as a warning (the solve
    proceeds: the operator can remain strongly monotone when the negative
    slope mass is small)."""
    if not problem.nl.monotone_certified and not allow_uncertified:
        raise ParameterError(
            "nonlinearity is not monotonicity-certified; run check_monotone "
            "or pass allow_uncertified=True")
    _check_same_grid(u, problem.g)
    view = smoothing_view(problem.nl, smoothing)
    coords = problem.grid.coordinates()
    y_init = _initial_state(problem, u.values, y0)
    warnings = ()
    from .nonlinearity import _CanonicalView
    if isinstance(view, _CanonicalView):
        warnings = _canonical_monotonicity_recheck(view, problem, y_init)
    fld = _SmoothedField(view, coords)
    y, its, rn, trace = _newton(problem.grid, fld, u.values, problem.solver, y_init)
    return StateSolveResult(GridFunction(problem.grid, y), its, rn,
                            float(np.max(np.abs(y))), warnings=warnings,
                            trace=tuple(trace))


class _SensitivityField:
    """z -> f'_x(y(x); z): nodewise piecewise linear with the kink at z = 0
    (slope f'_+ for z >= 0 -- the deterministic tie-break -- f'_- below)."""

    def __init__(self, minus, plus):
        self.minus = minus
        self.plus = plus

    def value(self, z):
        return np.where(z >= 0.0, self.plus, self.minus) * z

    def slope(self, z):
        return np.where(z >= 0.0, self.plus, self.minus)


def solve_sensitivity(problem, y, h, z0=None):
    """Solve -Delta_h z + f'_x(y; z) = h (the linearized/sensitivity equation).

    y must be a solved state; the directional-derivative map is assembled
    from the one-sided slopes of f at y."""
    _check_same_grid(y, problem.g)
    _check_same_grid(h, problem.g)
    coords = problem.grid.coordinates()
    minus, plus = problem.nl.one_sided_derivs(coords, y.values)
    fld = _SensitivityField(np.maximum(minus, 0.0), np.maximum(plus, 0.0))
    z_init = np.zeros(problem.grid.size) if z0 is None else np.asarray(z0).copy()
    z, _, _, _ = _newton(problem.grid, fld, h.values, problem.solver, z_init)
    return GridFunction(problem.grid, z)


def solve_adjoint(problem, zeta, rhs):
    """Solve -Delta_h p + zeta p = rhs with a nonnegative coefficient zeta
    (used with rhs = y - g)."""
    zv = zeta.values if isinstance(zeta, GridFunction) else np.asarray(zeta, dtype=float)
    if np.any(zv < 0.0):
        k = int(np.argmin(zv))
        raise ParameterError(f"adjoint coefficient must be >= 0; node {k} has {zv[k]:.3e}")
    return solve_shifted_laplacian(problem.grid, zv, rhs.values,
                                   tol=problem.solver.cg_tol,
                                   max_iter=problem.solver.cg_max)
