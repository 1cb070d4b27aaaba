"""Reduced objective, smoothed gradients, projected gradient descent, and
path-following against dense-algebra oracles."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from relupde.errors import ConvergenceError
from relupde.grid import Grid, inner_l2, norm_l2, norm_linf
from relupde.mollifier import Mollifier
from relupde.network import construct_interpolant_net
from relupde.nonlinearity import MollifiedSmoothing, Nonlinearity
from relupde.optimize import (extract_multipliers, geometric_schedule,
                              path_follow, project_box, reduced_objective,
                              smoothed_gradient, solve_regularized)
from relupde.rng import rng_stream
from relupde.statesolve import ControlProblem, SolverSettings, solve_state

from oracles import (dense_neg_laplacian, lq_box_optimum, lq_gradient,
                     lq_objective, lq_unconstrained_optimum)

TIGHT = SolverSettings(newton_tol=1e-13, cg_tol=1e-14)
SM = MollifiedSmoothing(Mollifier(1e-2))


def eigen_field(grid, scale=1.0):
    X = grid.coordinates()
    vals = np.ones(grid.size)
    for i in range(grid.dim):
        a, b = grid.extents[i]
        vals *= np.sin(np.pi * (X[:, i] - a) / (b - a))
    return grid.function(scale * vals)


def lq_problem(grid, alpha=1e-2, bounds=None):
    return ControlProblem(grid, Nonlinearity.builtin("zero"),
                          eigen_field(grid), alpha, bounds=bounds, solver=TIGHT)


class TestReducedObjective:
    def test_zero_at_matching_target(self):
        grid = Grid((10, 10))
        prob = ControlProblem(grid, Nonlinearity.builtin("relu"), grid.zeros(),
                              1.0, solver=TIGHT)
        g = solve_state(prob, grid.zeros()).y
        prob2 = ControlProblem(grid, prob.nl, g, 1.0, solver=TIGHT)
        assert reduced_objective(prob2, grid.zeros()) == 0.0

    def test_matches_dense_lq_oracle(self):
        grid = Grid((14, 14))
        prob = lq_problem(grid)
        A = dense_neg_laplacian(grid)
        gen = rng_stream(0, 4)
        for _ in range(3):
            u = gen.normal(size=grid.size)
            ours = reduced_objective(prob, grid.function(u))
            ref = lq_objective(A, grid.cell_measure, prob.alpha, u, prob.g.values)
            assert abs(ours - ref) <= 1e-8 * max(1.0, abs(ref))

    def test_quadratic_scaling(self):
        grid = Grid((12, 12))
        prob = ControlProblem(grid, Nonlinearity.builtin("zero"), grid.zeros(),
                              1e-2, solver=TIGHT)
        gen = rng_stream(1, 4)
        u = grid.function(gen.normal(size=grid.size))
        J1 = reduced_objective(prob, u)
        J2 = reduced_objective(prob, 2.0 * u)
        assert abs(J2 - 4.0 * J1) <= 1e-10 * max(1.0, J2)


class TestSmoothedGradient:
    def test_zero_control_zero_target(self):
        grid = Grid((10, 10))
        prob = ControlProblem(grid, Nonlinearity.builtin("zero"), grid.zeros(),
                              1e-2, solver=TIGHT)
        grad, _, _ = smoothed_gradient(prob, SM, grid.zeros())
        assert norm_linf(grad) == 0.0

    def test_matches_dense_lq_gradient(self):
        grid = Grid((14, 14))
        prob = lq_problem(grid)
        A = dense_neg_laplacian(grid)
        gen = rng_stream(2, 4)
        u = gen.normal(size=grid.size)
        grad, _, _ = smoothed_gradient(prob, SM, grid.function(u))
        ref = lq_gradient(A, prob.alpha, u, prob.g.values)
        assert norm_l2(grad - grid.function(ref)) <= 1e-6

    def test_finite_difference_directional_check(self):
        # on the kink-active max-net problem, smoothed J and its gradient
        grid = Grid((12, 12))
        net = construct_interpolant_net([0.0], [0.0], (0.0, 1.0), spatial_dim=2)
        prob = ControlProblem(grid, Nonlinearity.from_network(net),
                              eigen_field(grid, 0.5), 1e-1, solver=TIGHT)
        X = grid.coordinates()
        u = grid.function(np.sign(X[:, 0] - 0.5) * eigen_field(grid).values)
        grad, y_eps, _ = smoothed_gradient(prob, SM, u)

        from relupde.statesolve import solve_state_smoothed
        def J_eps(uu):
            y = solve_state_smoothed(prob, SM, uu).y
            return 0.5 * norm_l2(y - prob.g) ** 2 + 0.5 * prob.alpha * norm_l2(uu) ** 2

        gen = rng_stream(3, 4)
        t = 1e-6
        J0 = J_eps(u)
        for _ in range(10):
            delta = grid.function(gen.normal(size=grid.size))
            fd = (J_eps(u + t * delta) - J0) / t
            exact = inner_l2(grad, delta)
            assert abs(fd - exact) <= 1e-4 * max(1.0, abs(exact))


class TestProjectBox:
    def test_identity_inside(self):
        grid = Grid((6,))
        u = grid.function(np.linspace(-0.5, 0.5, 6))
        bounds = (grid.function(-np.ones(6)), grid.function(np.ones(6)))
        assert np.array_equal(project_box(u, bounds).values, u.values)

    def test_clamps_above(self):
        grid = Grid((6,))
        bounds = (grid.function(-np.ones(6)), grid.function(np.ones(6)))
        u = grid.function(np.full(6, 2.0))
        assert np.array_equal(project_box(u, bounds).values, np.ones(6))

    def test_idempotent(self):
        grid = Grid((6,))
        gen = rng_stream(4, 4)
        bounds = (grid.function(-np.ones(6)), grid.function(np.ones(6)))
        u = grid.function(3.0 * gen.normal(size=6))
        once = project_box(u, bounds)
        twice = project_box(once, bounds)
        assert np.array_equal(once.values, twice.values)


class TestSolveRegularized:
    def test_unconstrained_lq_hits_dense_kkt(self):
        grid = Grid((14, 14))
        prob = lq_problem(grid)
        A = dense_neg_laplacian(grid)
        u_star = lq_unconstrained_optimum(A, prob.alpha, prob.g.values)
        u, info = solve_regularized(prob, SM, grid.zeros(), stop_tol=1e-9)
        assert norm_l2(u - grid.function(u_star)) <= 1e-6
        assert info.natural_residual <= 1e-9

    def test_box_constrained_matches_projected_kkt_oracle(self):
        grid = Grid((12, 12))
        lo = np.full(grid.size, -10.0)
        hi = np.full(grid.size, 0.6)
        bounds = (grid.function(lo), grid.function(hi))
        prob = lq_problem(grid, alpha=1e-3, bounds=bounds)
        # make the unconstrained optimum violate the upper bound somewhere
        A = dense_neg_laplacian(grid)
        u_free = lq_unconstrained_optimum(A, prob.alpha, prob.g.values)
        assert np.max(u_free) > 0.6
        u_star = lq_box_optimum(A, prob.alpha, prob.g.values, lo, hi)
        u, info = solve_regularized(prob, SM, grid.zeros(), stop_tol=1e-10)
        assert norm_l2(u - grid.function(u_star)) <= 1e-5
        clamped = np.isclose(u_star, 0.6, atol=1e-12)
        assert clamped.any()
        assert np.array_equal(u.values[clamped], np.full(clamped.sum(), 0.6))

    def test_oracle_seeded_start_stops_immediately(self):
        grid = Grid((12, 12))
        prob = lq_problem(grid)
        A = dense_neg_laplacian(grid)
        u_star = grid.function(lq_unconstrained_optimum(A, prob.alpha, prob.g.values))
        u, info = solve_regularized(prob, SM, u_star, stop_tol=1e-6)
        assert info.iterations <= 1

    def test_iteration_cap_raises_with_history(self):
        grid = Grid((10, 10))
        prob = lq_problem(grid)
        with pytest.raises(ConvergenceError) as err:
            solve_regularized(prob, SM, grid.zeros(), stop_tol=1e-14, max_iters=2)
        assert len(err.value.trace) >= 1

    def test_descent_and_feasibility_invariants(self):
        grid = Grid((10, 10))
        lo = grid.function(np.full(grid.size, -0.2))
        hi = grid.function(np.full(grid.size, 0.2))
        prob = lq_problem(grid, alpha=1e-3, bounds=(lo, hi))
        u, info = solve_regularized(prob, SM, grid.zeros(), stop_tol=1e-8)
        Js = [row[1] for row in info.history]
        assert all(b <= a + 1e-12 for a, b in zip(Js, Js[1:]))
        assert np.all(u.values >= lo.values) and np.all(u.values <= hi.values)


class TestPathFollow:
    def test_constant_path_for_zero_nonlinearity(self):
        grid = Grid((12, 12))
        prob = lq_problem(grid)
        A = dense_neg_laplacian(grid)
        u_star = lq_unconstrained_optimum(A, prob.alpha, prob.g.values)
        res = path_follow(prob, "mollified", [1e-1, 1e-2, 1e-3], grid.zeros(),
                          stop_tol=1e-9)
        assert norm_l2(res.u - grid.function(u_star)) <= 1e-6
        assert all(c <= 1e-9 for c in res.cauchy_increments)

    def test_single_level_equals_solve_regularized(self):
        grid = Grid((10, 10))
        prob = lq_problem(grid)
        res = path_follow(prob, "mollified", [1e-2], grid.zeros(), stop_tol=1e-8)
        u_direct, _ = solve_regularized(prob, MollifiedSmoothing(Mollifier(1e-2)),
                                        grid.zeros(), stop_tol=1e-8)
        assert np.array_equal(res.u.values, u_direct.values)

    def test_kink_active_path_with_stationarity_residuals(self):
        # scaled-down version of the kink-crossing study instance
        grid = Grid((20, 20))
        X = grid.coordinates()
        g = grid.function(np.sin(2 * np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1]))
        net = construct_interpolant_net([0.0], [0.0], (0.0, 1.0), spatial_dim=2)
        prob = ControlProblem(grid, Nonlinearity.from_network(net), g, 1e-2,
                              solver=SolverSettings(newton_tol=1e-12, cg_tol=1e-12))
        sched = geometric_schedule(1e-1, 1e-4, 5)
        res = path_follow(prob, "mollified", sched, grid.zeros(), stop_tol=1e-8,
                          mollifier_panels=24)
        assert res.y.values.min() < -1e-3 and res.y.values.max() > 1e-3
        incs = res.cauchy_increments
        assert all(b < a for a, b in zip(incs, incs[1:]))
        # weak-stationarity residual of the final triple
        from relupde.grid import apply_laplacian
        lhs = apply_laplacian(res.p).values + res.zeta.values * res.p.values
        rhs = (res.y - prob.g).values
        rel = np.sqrt(grid.cell_measure) * np.linalg.norm(lhs - rhs) \
            / (1 + norm_l2(res.y - prob.g))
        assert rel <= 1e-6
        assert norm_l2(res.p + prob.alpha * res.u) <= 1e-6


class TestMultipliers:
    def test_interior_point_zero_multipliers(self):
        grid = Grid((8,))
        bounds = (grid.function(-np.ones(8)), grid.function(np.ones(8)))
        u = grid.function(np.zeros(8))
        p = grid.function(np.zeros(8))
        mu_a, mu_b, res = extract_multipliers(u, p, 1.0, bounds)
        assert norm_linf(mu_a) == 0.0 and norm_linf(mu_b) == 0.0
        assert res["complementarity_a"] == 0.0

    def test_upper_active_sign_split(self):
        grid = Grid((8,))
        bounds = (grid.function(-np.ones(8)), grid.function(np.ones(8)))
        u = grid.function(np.ones(8))            # at the upper bound
        p = grid.function(np.full(8, -2.0))      # mu = -(p + alpha u) = 1 > 0
        mu_a, mu_b, res = extract_multipliers(u, p, 1.0, bounds)
        assert np.all(mu_b.values == 1.0)
        assert norm_linf(mu_a) == 0.0
        assert res["complementarity_b"] == 0.0

    def test_complementarity_small_after_converged_solve(self):
        grid = Grid((12, 12))
        lo = np.full(grid.size, -10.0)
        hi = np.full(grid.size, 0.6)
        bounds = (grid.function(lo), grid.function(hi))
        prob = lq_problem(grid, alpha=1e-3, bounds=bounds)
        stop_tol = 1e-9
        u, info = solve_regularized(prob, SM, grid.zeros(), stop_tol=stop_tol)
        mu_a, mu_b, res = extract_multipliers(u, info.p_eps, prob.alpha, bounds)
        assert res["complementarity_a"] <= 10 * stop_tol
        assert res["complementarity_b"] <= 10 * stop_tol


class TestGradientConsistency:
    def test_mollified_gradient_equals_nonsmooth_adjoint_off_kinks(self):
        # eps below the kink clearance of the state: the smoothed gradient
        # coincides with the nonsmooth adjoint gradient built from the
        # a.e. slope field
        grid = Grid((14, 14))
        net = construct_interpolant_net([1.5], [0.0], (0.0, 1.0), spatial_dim=2)
        nl = Nonlinearity.from_network(net)
        prob = ControlProblem(grid, nl, eigen_field(grid), 1e-1, solver=TIGHT)
        u = eigen_field(grid, 2.0)
        state = solve_state(prob, u)
        clearance = 1.5 - norm_linf(state.y)
        assert clearance > 0.4
        sm = MollifiedSmoothing(Mollifier(0.1))
        grad, _, _ = smoothed_gradient(prob, sm, u)
        from relupde.statesolve import solve_adjoint
        zeta = grid.function(nl.weak_gradient_y(grid.coordinates(), state.y.values))
        p = solve_adjoint(prob, zeta, state.y - prob.g)
        ref = grid.function(p.values + prob.alpha * u.values)
        assert norm_l2(grad - ref) <= 1e-10

    def test_minimizer_approximation_under_interpolant_refinement(self):
        # optimizer output under interpolant nets converges to the output
        # under the true nonlinearity as the knot spacing halves
        grid = Grid((15,))
        target = Nonlinearity.builtin("cubic")
        g = eigen_field(grid, 2.0)
        # cheap controls so the optimal state spans several knot segments
        prob = ControlProblem(grid, target, g, 0.1, solver=TIGHT)
        sm = MollifiedSmoothing(Mollifier(1e-3))
        stop_tol = 1e-7
        u_ref, _ = solve_regularized(prob, sm, grid.zeros(), stop_tol=stop_tol)
        y_ref = solve_state(prob, u_ref).y
        u_errs, y_errs = [], []
        for delta in (0.8, 0.4, 0.2, 0.1):
            # asymmetric window: symmetric knots of the odd target produce
            # identical chords near zero across spacings
            knots = np.arange(-1.93, 2.07 + delta / 2, delta)
            net = construct_interpolant_net(knots, target.value(None, knots),
                                            (knots[0] ** 2, knots[-1] ** 2),
                                            spatial_dim=1)
            prob_n = ControlProblem(grid, Nonlinearity.from_network(net), g,
                                    1e-2, solver=TIGHT)
            u_n, _ = solve_regularized(prob_n, sm, grid.zeros(), stop_tol=stop_tol)
            u_errs.append(norm_l2(u_n - u_ref))
            y_errs.append(norm_l2(solve_state(prob_n, u_n).y - y_ref))
        assert all(b < a for a, b in zip(u_errs, u_errs[1:]))
        assert all(b < a for a, b in zip(y_errs, y_errs[1:]))
        assert u_errs[-1] <= 1e-3 * u_errs[0]  # two spacing halvings of slack
