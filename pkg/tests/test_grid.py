"""Discretization: stencil, CG solver, norms, Hoelder estimate, Poincare."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from relupde.errors import ConvergenceError, DimensionMismatch, ParameterError
from relupde.grid import (Grid, GridFunction, apply_laplacian, h1_seminorm,
                          holder_seminorm, inner_l2, norm_h1, norm_l2,
                          norm_linf, norm_y, poincare_estimate, read_csv,
                          read_json, solve_shifted_laplacian, write_csv,
                          write_json)
from relupde.rng import rng_stream

from oracles import dense_neg_laplacian


class TestLaplacian:
    def test_zero_field(self):
        grid = Grid((9, 9))
        out = apply_laplacian(grid.zeros())
        assert_allclose(out.values, 0.0)

    def test_exact_on_quadratics_1d(self):
        grid = Grid((31,))
        x = grid.coordinates()[:, 0]
        v = grid.function(x * (1 - x))
        assert_allclose(apply_laplacian(v).values, 2.0, rtol=1e-12)

    def test_second_order_on_eigenmode_2d(self):
        errs = []
        for n in (16, 32, 64):
            grid = Grid((n, n))
            X = grid.coordinates()
            v = grid.function(np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1]))
            err = norm_linf(apply_laplacian(v) - 2 * np.pi ** 2 * v)
            errs.append(err)
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios > 3.5) & (ratios < 4.5))

    def test_matches_dense_assembly(self):
        grid = Grid((7, 5), extents=((0, 2), (-1, 1)))
        A = dense_neg_laplacian(grid)
        gen = rng_stream(0, 4)
        v = gen.normal(size=grid.size)
        assert_allclose(apply_laplacian(grid.function(v)).values, A @ v, atol=1e-10)

    def test_grid_mismatch_rejected(self):
        a = Grid((5,))
        b = Grid((6,))
        with pytest.raises(DimensionMismatch):
            a.function(np.zeros(5)) + b.function(np.zeros(6))


class TestShiftedSolve:
    def test_poisson_1d_parabola(self):
        grid = Grid((63,))
        z = solve_shifted_laplacian(grid, 0.0, np.full(grid.size, 2.0))
        x = grid.coordinates()[:, 0]
        assert norm_linf(z - grid.function(x * (1 - x))) < 1e-10  # stencil exact

    def test_eigenfunction_identity_with_shift(self):
        grid = Grid((24, 24))
        X = grid.coordinates()
        v = np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])
        z = solve_shifted_laplacian(grid, 1.0, (2 * np.pi ** 2 + 1) * v, tol=1e-13)
        err = norm_linf(z - grid.function(v))
        assert err < 2e-3  # O(h^2)

    def test_residual_contract_random_instance(self):
        grid = Grid((12, 9))
        gen = rng_stream(1, 4)
        c = grid.function(gen.uniform(0, 3, size=grid.size))
        r = grid.function(gen.normal(size=grid.size))
        tol = 1e-9
        z = solve_shifted_laplacian(grid, c, r, tol=tol)
        resid = apply_laplacian(z).values + c.values * z.values - r.values
        assert np.linalg.norm(resid) <= tol * np.linalg.norm(r.values)

    def test_negative_shift_rejected(self):
        grid = Grid((5,))
        c = np.zeros(5)
        c[3] = -1e-3
        with pytest.raises(ParameterError, match="node 3"):
            solve_shifted_laplacian(grid, c, np.ones(5))

    def test_nonconvergence_carries_residual(self):
        grid = Grid((40, 40))
        gen = rng_stream(2, 4)
        r = gen.normal(size=grid.size)
        with pytest.raises(ConvergenceError, match="residual"):
            solve_shifted_laplacian(grid, 0.0, r, tol=1e-14, max_iter=3)

    def test_matches_dense_solve_small_grids(self):
        for shape in ((19, 19), (200,)):
            grid = Grid(shape)
            A = dense_neg_laplacian(grid)
            gen = rng_stream(3, 4)
            r = gen.normal(size=grid.size)
            z = solve_shifted_laplacian(grid, 0.0, r, tol=1e-13)
            ref = np.linalg.solve(A, r)
            assert np.linalg.norm(z.values - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_discrete_maximum_principle(self):
        grid = Grid((17, 17))
        gen = rng_stream(4, 4)
        r = grid.function(gen.uniform(0, 1, size=grid.size))
        c = grid.function(gen.uniform(0, 2, size=grid.size))
        z = solve_shifted_laplacian(grid, c, r, tol=1e-12)
        assert np.min(z.values) >= -1e-12


class TestNormsAndInnerProducts:
    def test_constant_field_l2(self):
        grid = Grid((32, 32))
        v = grid.function(np.ones(grid.size))
        assert_allclose(norm_l2(v), np.sqrt(grid.cell_measure * grid.size))
        assert norm_l2(v) < 1.0

    def test_eigenmode_l2_refines_to_half(self):
        # the nodal quadrature of sin^2 is exact, so every level hits 1/2
        for n in (16, 32, 64):
            grid = Grid((n, n))
            X = grid.coordinates()
            v = grid.function(np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1]))
            assert abs(norm_l2(v) - 0.5) < 1e-12

    def test_norm_ordering(self):
        grid = Grid((11, 13))
        gen = rng_stream(5, 4)
        for _ in range(50):
            v = grid.function(gen.normal(size=grid.size))
            assert norm_y(v) >= norm_h1(v) >= norm_l2(v)

    def test_symmetry_of_laplacian(self):
        grid = Grid((10, 14))
        gen = rng_stream(6, 4)
        for _ in range(10):
            u = grid.function(gen.normal(size=grid.size))
            v = grid.function(gen.normal(size=grid.size))
            a = inner_l2(apply_laplacian(u), v)
            b = inner_l2(u, apply_laplacian(v))
            assert abs(a - b) <= 1e-10 * max(abs(a), abs(b))

    def test_positivity(self):
        grid = Grid((8, 8))
        gen = rng_stream(7, 4)
        v = grid.function(gen.normal(size=grid.size))
        assert inner_l2(apply_laplacian(v), v) > 0

    def test_h1_seminorm_equals_laplacian_quadratic_form(self):
        grid = Grid((9, 7))
        gen = rng_stream(8, 4)
        v = grid.function(gen.normal(size=grid.size))
        assert_allclose(h1_seminorm(v) ** 2, inner_l2(apply_laplacian(v), v),
                        rtol=1e-12)


class TestHolderSeminorm:
    def test_constant_is_zero(self):
        grid = Grid((20,))
        assert holder_seminorm(grid.function(np.ones(20))) == 0.0

    def test_linear_with_exponent_one(self):
        grid = Grid((64,))
        x = grid.coordinates()[:, 0]
        assert_allclose(holder_seminorm(grid.function(x), exponent=1.0), 1.0,
                        rtol=1e-10)

    def test_square_root_cusp(self):
        # |x - 1/2|^(1/2) has Hoelder-1/2 constant 1, attained at the cusp;
        # oracle: dense pair max on a fine grid equals the estimate
        grid = Grid((1023,))
        x = grid.coordinates()[:, 0]
        v = grid.function(np.sqrt(np.abs(x - 0.5)))
        est = holder_seminorm(v, exponent=0.5)
        assert est <= 1.0 + 1e-9
        assert est > 0.95

    def test_budgeted_path_on_large_grid(self):
        grid = Grid((80, 80))  # m > 4096 triggers sampling
        X = grid.coordinates()
        v = grid.function(X[:, 0])
        est = holder_seminorm(v, exponent=1.0, pair_budget=500, seed=0)
        assert 0.9 <= est <= 1.0 + 1e-9

    def test_exponent_validated(self):
        grid = Grid((5,))
        with pytest.raises(ParameterError):
            holder_seminorm(grid.zeros(), exponent=1.5)


class TestPoincare:
    def test_interval(self):
        grid = Grid((255,))
        est = poincare_estimate(grid)
        assert abs(est - 1 / np.pi) / (1 / np.pi) < 0.02

    def test_unit_square(self):
        grid = Grid((48, 48))
        est = poincare_estimate(grid)
        ref = 1 / (np.pi * np.sqrt(2))
        assert abs(est - ref) / ref < 0.02

    def test_stabilizes_under_refinement(self):
        a = poincare_estimate(Grid((24, 24)))
        b = poincare_estimate(Grid((48, 48)))
        assert abs(a - b) / b < 0.01


class TestImportExport:
    def test_csv_round_trip(self, tmp_path):
        grid = Grid((6, 4), extents=((0, 1), (2, 3)))
        gen = rng_stream(9, 4)
        v = grid.function(gen.normal(size=grid.size))
        path = tmp_path / "f.csv"
        write_csv(v, path)
        back = read_csv(grid, path)
        assert np.array_equal(back.values, v.values)
        header = path.read_text().splitlines()[0]
        assert header == "x1,x2,value"

    def test_json_round_trip(self, tmp_path):
        grid = Grid((11,))
        gen = rng_stream(10, 4)
        v = grid.function(gen.normal(size=grid.size))
        path = tmp_path / "f.json"
        write_json(v, path)
        assert np.array_equal(read_json(grid, path).values, v.values)

    def test_csv_wrong_length(self, tmp_path):
        grid = Grid((4,))
        path = tmp_path / "f.csv"
        path.write_text("x1,value\n0.2,1.0\n")
        with pytest.raises(DimensionMismatch):
            read_csv(grid, path)
