"""Uniform tensor grids on rectangles with homogeneous Dirichlet boundary.

Only interior nodes are stored; the zero boundary is implicit in the
stencils.  All inner products carry the cell measure w = prod(h_i), so
discrete norms approximate their continuum counterparts.
"""

import csv
import json

import numpy as np

from .errors import ConvergenceError, DimensionMismatch, ParameterError
from .rng import STREAM_HOLDER_PAIRS, rng_stream


class Grid:
    """Interior nodes of a uniform tensor grid; dimension 1 or 2.

    The continuum theory behind the solvers is stated for d >= 2; the 1-D
    case is supported because the discrete operators are dimension-agnostic
    and 1-D keeps reference computations cheap.
    """

    def __init__(self, shape, extents=None):
        shape = tuple(int(n) for n in np.atleast_1d(shape))
        if len(shape) not in (1, 2):
            raise ParameterError(f"grid dimension must be 1 or 2, got {len(shape)}")
        if any(n < 1 for n in shape):
            raise ParameterError(f"interior node counts must be >= 1, got {shape}")
        if extents is None:
            extents = tuple((0.0, 1.0) for _ in shape)
        extents = tuple((float(a), float(b)) for a, b in extents)
        if len(extents) != len(shape):
            raise DimensionMismatch("extents per axis", len(shape), len(extents))
        for a, b in extents:
            if not b > a:
                raise ParameterError(f"extent ({a}, {b}) is empty")
        self.shape = shape
        self.extents = extents
        self.dim = len(shape)
        self.spacing = tuple((b - a) / (n + 1) for (a, b), n in zip(extents, shape))
        self.cell_measure = float(np.prod(self.spacing))
        self.size = int(np.prod(shape))
        self._coords = None

    def axis_coords(self, axis):
        a, _ = self.extents[axis]
        h = self.spacing[axis]
        return a + h * np.arange(1, self.shape[axis] + 1)

    def coordinates(self):
        """Interior node coordinates, shape (m, d), row-major (axis 0 slowest)."""
        if self._coords is None:
            axes = [self.axis_coords(i) for i in range(self.dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            self._coords = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return self._coords

    def reshape(self, values):
        return np.asarray(values).reshape(self.shape)

    def zeros(self):
        return GridFunction(self, np.zeros(self.size))

    def function(self, values):
        return GridFunction(self, values)

    def from_callable(self, fn):
        """Sample fn(x) (x of shape (m, d)) into a GridFunction."""
        return GridFunction(self, np.asarray(fn(self.coordinates()), dtype=float))

    def compatible(self, other):
        return (self.shape == other.shape and self.extents == other.extents)


class GridFunction:
    """Nodal values on a grid's interior; light arithmetic for readability."""

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != grid.size:
            raise DimensionMismatch("grid function length", grid.size, values.size)
        if not np.all(np.isfinite(values)):
            raise ParameterError("grid function values must be finite")
        self.grid = grid
        self.values = values

    def copy(self):
        return GridFunction(self.grid, self.values.copy())

    def __add__(self, other):
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


def _check_same_grid(a, b):
    if not a.grid.compatible(b.grid):
        raise DimensionMismatch("grids", (a.grid.shape, a.grid.extents),
                                (b.grid.shape, b.grid.extents))


def _neg_laplacian_values(grid, vals):
    a = vals.reshape(grid.shape)
    out = np.zeros_like(a)
    for axis in range(grid.dim):
        h2 = grid.spacing[axis] ** 2
        pad = [(0, 0)] * grid.dim
        pad[axis] = (1, 1)
        p = np.pad(a, pad)  # zero Dirichlet ghost layer
        sl_lo = [slice(None)] * grid.dim
        sl_hi = [slice(None)] * grid.dim
        sl_lo[axis] = slice(0, -2)
        sl_hi[axis] = slice(2, None)
        out += (2.0 * a - p[tuple(sl_lo)] - p[tuple(sl_hi)]) / h2
    return out.reshape(-1)


def apply_laplacian(v):
    """-Delta_h v with the 3-point (1-D) / 5-point (2-D) stencil; the sign
    makes the operator positive definite."""
    return GridFunction(v.grid, _neg_laplacian_values(v.grid, v.values))


def _coerce_field(grid, c):
    if isinstance(c, GridFunction):
        _check_same_grid(GridFunction(grid, np.zeros(grid.size)), c)
        return c.values
    arr = np.asarray(c, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.size, float(arr))
    return arr.reshape(-1)


def solve_shifted_laplacian(grid, c, r, tol=1e-12, max_iter=None, x0=None):
    """Conjugate gradients for (-Delta_h + diag(c)) z = r, c >= 0 nodewise.

    Stops when ||A z - r||_2 <= tol * ||r||_2 (Euclidean on nodal vectors);
    raises ConvergenceError with the final residual otherwise.
    """
    cv = _coerce_field(grid, c)
    rv = _coerce_field(grid, r)
    if np.any(cv < 0.0):
        k = int(np.argmin(cv))
        raise ParameterError(f"shift coefficient must be >= 0; node {k} has {cv[k]:.3e}")
    if max_iter is None:
        max_iter = max(200, 20 * grid.size)

    def matvec(z):
        return _neg_laplacian_values(grid, z) + cv * z

    rnorm0 = float(np.linalg.norm(rv))
    if rnorm0 == 0.0:
        return GridFunction(grid, np.zeros(grid.size))
    target = tol * rnorm0
    x = np.zeros(grid.size) if x0 is None else _coerce_field(grid, x0).copy()
    res = rv - matvec(x)
    p = res.copy()
    rs = float(res @ res)
    for _ in range(int(max_iter)):
        if np.sqrt(rs) <= target:
            return GridFunction(grid, x)
        Ap = matvec(p)
        alpha = rs / float(p @ Ap)
        x += alpha * p
        res -= alpha * Ap
        rs_new = float(res @ res)
        p = res + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= target:
        return GridFunction(grid, x)
    raise ConvergenceError(
        f"CG did not reach {target:.3e} within {max_iter} iterations "
        f"(final residual {np.sqrt(rs):.3e})")


# -- inner products and norms -------------------------------------------------

def inner_l2(a, b):
    _check_same_grid(a, b)
    return float(a.grid.cell_measure * np.dot(a.values, b.values))


def norm_l2(v):
    return float(np.sqrt(v.grid.cell_measure) * np.linalg.norm(v.values))


def norm_linf(v):
    return float(np.max(np.abs(v.values))) if v.values.size else 0.0


def h1_seminorm(v):
    """Discrete |v|_{H^1}: forward differences per axis including the jumps
    to the zero boundary; equals <(-Delta_h) v, v>^(1/2) exactly."""
    grid = v.grid
    a = grid.reshape(v.values)
    total = 0.0
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        pad = [(0, 0)] * grid.dim
        pad[axis] = (1, 1)
        p = np.pad(a, pad)
        d = np.diff(p, axis=axis) / h
        total += grid.cell_measure * float(np.sum(d * d))
    return float(np.sqrt(total))


def norm_h1(v):
    return float(np.sqrt(norm_l2(v) ** 2 + h1_seminorm(v) ** 2))


def norm_y(v):
    """Graph norm of the state space: ||-Delta_h v||^2 + |v|_1^2 + ||v||^2."""
    lap = apply_laplacian(v)
    return float(np.sqrt(norm_l2(lap) ** 2 + h1_seminorm(v) ** 2 + norm_l2(v) ** 2))


def holder_seminorm(v, exponent=0.5, pair_budget=2000, seed=0):
    """max |v(x)-v(x')| / |x-x'|^a over sampled node pairs.

    All pairs when the grid has at most 4096 nodes; otherwise every
    neighbor pair plus pair_budget random pairs (Philox stream 3).
    """
    if not 0.0 < exponent <= 1.0:
        raise ParameterError(f"Hoelder exponent must lie in (0, 1], got {exponent}")
    grid = v.grid
    coords = grid.coordinates()
    vals = v.values
    m = grid.size
    best = 0.0
    if m <= 4096:
        block = 256
        for start in range(0, m, block):
            stop = min(start + block, m)
            dv = np.abs(vals[start:stop, None] - vals[None, :])
            dx = np.linalg.norm(coords[start:stop, None, :] - coords[None, :, :], axis=2)
            np.fill_diagonal(dx[:, start:stop], np.inf)
            best = max(best, float(np.max(dv / dx ** exponent)))
        return best
    # neighbor pairs along each axis
    a = grid.reshape(vals)
    for axis in range(grid.dim):
        d = np.abs(np.diff(a, axis=axis))
        best = max(best, float(np.max(d)) / grid.spacing[axis] ** exponent)
    gen = rng_stream(seed, STREAM_HOLDER_PAIRS)
    i = gen.integers(0, m, size=int(pair_budget))
    j = gen.integers(0, m, size=int(pair_budget))
    keep = i != j
    i, j = i[keep], j[keep]
    dv = np.abs(vals[i] - vals[j])
    dx = np.linalg.norm(coords[i] - coords[j], axis=1)
    if dv.size:
        best = max(best, float(np.max(dv / dx ** exponent)))
    return best


def poincare_estimate(grid, iterations=20):
    """Empirical constant c with ||v||_2 <= c |v|_{H^1}: inverse power
    iteration on -Delta_h (deterministic start)."""
    x = np.ones(grid.size)
    lam = None
    for _ in range(int(iterations)):
        z = solve_shifted_laplacian(grid, 0.0, x, tol=1e-12)
        zv = z.values / np.linalg.norm(z.values)
        lam = float(zv @ _neg_laplacian_values(grid, zv))
        x = zv
    return 1.0 / np.sqrt(lam)


# -- import/export -------------------------------------------------------------

def write_csv(v, path):
    """CSV with header x1[,x2],value, row-major over nodes."""
    grid = v.grid
    coords = grid.coordinates()
    header = [f"x{i + 1}" for i in range(grid.dim)] + ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, val in zip(coords, v.values):
            writer.writerow([repr(float(c)) for c in row] + [repr(float(val))])


def read_csv(grid, path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != grid.dim + 1:
            raise ParameterError(
                f"{path}: expected {grid.dim + 1} columns ({grid.dim}-d grid), got {len(header)}")
        vals = [float(row[-1]) for row in reader]
    if len(vals) != grid.size:
        raise DimensionMismatch(f"{path}: node count", grid.size, len(vals))
    return GridFunction(grid, np.asarray(vals))


def write_json(v, path):
    with open(path, "w") as fh:
        json.dump([float(x) for x in v.values], fh)
        fh.write("\n")


def read_json(grid, path):
    with open(path) as fh:
        vals = json.load(fh)
    return GridFunction(grid, np.asarray(vals, dtype=float))
