"""Monotone PC1 nonlinearities f(x, y).

A Nonlinearity is one of
  * network     -- a ReluNetwork (x-dependent),
  * builtin     -- a named analytic PC1 function of y alone
                   (zero, identity, relu, shifted_relu, double_kink, cubic),
  * knot_table  -- a 1-D piecewise-linear interpolant given by ascending
                   knots, values and a pair of end slopes.

All variants expose exact values, directional derivatives, one-sided
derivatives, Clarke intervals, the a.e. weak gradient, and mollified /
canonical smoothings.
"""

import numpy as np

from . import network as nnet
from .errors import DimensionMismatch, ParameterError
from .mollifier import Mollifier


class _PiecewiseLinear:
    """Continuous piecewise-linear function of y: K ascending knots, K+1
    slopes; exact segment arithmetic (no interpolation error)."""

    def __init__(self, knots, knot_values, slopes, const=0.0):
        self.knots = np.asarray(knots, dtype=float).reshape(-1)
        self.knot_values = np.asarray(knot_values, dtype=float).reshape(-1)
        self.slopes = np.asarray(slopes, dtype=float).reshape(-1)
        self.const = float(const)
        if self.slopes.size != self.knots.size + 1:
            raise ParameterError("need one slope per segment (K+1)")
        if self.knots.size > 1 and not np.all(np.diff(self.knots) > 0):
            raise ParameterError("knots must be strictly increasing")

    @classmethod
    def from_table(cls, knots, values, end_slopes):
        knots = np.asarray(knots, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float).reshape(-1)
        if knots.size < 1:
            raise ParameterError("knot table needs at least one knot")
        if values.shape != knots.shape:
            raise ParameterError(
                f"values length {values.size} != knots length {knots.size}")
        slopes = np.empty(knots.size + 1)
        slopes[0] = float(end_slopes[0])
        slopes[-1] = float(end_slopes[1])
        if knots.size > 1:
            slopes[1:-1] = np.diff(values) / np.diff(knots)
        return cls(knots, values, slopes)

    @classmethod
    def affine(cls, const, slope):
        return cls([], [], [slope], const=const)

    @property
    def kinks(self):
        if self.knots.size == 0:
            return self.knots
        return self.knots[np.diff(self.slopes) != 0.0]

    def value(self, y):
        y = np.asarray(y, dtype=float)
        if self.knots.size == 0:
            return self.const + self.slopes[0] * y
        idx = np.searchsorted(self.knots, y, side="right")
        ref = np.where(idx == 0, 0, idx - 1)
        return self.knot_values[ref] + self.slopes[idx] * (y - self.knots[ref])

    def one_sided(self, y):
        y = np.asarray(y, dtype=float)
        minus = self.slopes[np.searchsorted(self.knots, y, side="left")]
        plus = self.slopes[np.searchsorted(self.knots, y, side="right")]
        return minus, plus

    def slope_hull(self, y, radius):
        """Min/max slope seen on [y - radius, y + radius]."""
        minus, plus = self.one_sided(y)
        lo = np.minimum(minus, plus)
        hi = np.maximum(minus, plus)
        for j, t in enumerate(self.knots):
            near = np.abs(np.asarray(y, dtype=float) - t) <= radius
            if np.any(near):
                lo = np.where(near, np.minimum(lo, min(self.slopes[j], self.slopes[j + 1])), lo)
                hi = np.where(near, np.maximum(hi, max(self.slopes[j], self.slopes[j + 1])), hi)
        return lo, hi


_BUILTIN_NAMES = ("zero", "identity", "relu", "shifted_relu", "double_kink", "cubic")


class Nonlinearity:
    """Tagged union over {network, builtin, knot_table}; see module docstring."""

    def __init__(self, kind, name=None, pw=None, net=None, value_fn=None,
                 deriv_fn=None, monotone_certified=False):
        self.kind = kind
        self.name = name
        self._pw = pw
        self._net = net
        self._value_fn = value_fn
        self._deriv_fn = deriv_fn
        self.monotone_certified = bool(monotone_certified)

    # -- constructors --------------------------------------------------

    @classmethod
    def builtin(cls, name, **params):
        if name == "zero":
            return cls("builtin", name, pw=_PiecewiseLinear.affine(0.0, 0.0),
                       monotone_certified=True)
        if name == "identity":
            return cls("builtin", name, pw=_PiecewiseLinear.affine(0.0, 1.0),
                       monotone_certified=True)
        if name == "relu":
            return cls("builtin", name,
                       pw=_PiecewiseLinear.from_table([0.0], [0.0], (0.0, 1.0)),
                       monotone_certified=True)
        if name == "shifted_relu":
            t0 = float(params.pop("t0"))
            return cls("builtin", name,
                       pw=_PiecewiseLinear.from_table([t0], [0.0], (0.0, 1.0)),
                       monotone_certified=True)
        if name == "double_kink":
            t0, t1 = float(params.pop("t0")), float(params.pop("t1"))
            s0, s1, s2 = (float(params.pop(k)) for k in ("s0", "s1", "s2"))
            if not t0 < t1:
                raise ParameterError(f"double_kink needs t0 < t1, got {t0}, {t1}")
            pw = _PiecewiseLinear.from_table([t0, t1], [0.0, s1 * (t1 - t0)], (s0, s2))
            return cls("builtin", name, pw=pw,
                       monotone_certified=min(s0, s1, s2) >= 0.0)
        if name == "cubic":
            return cls("builtin", name,
                       value_fn=lambda y: y ** 3 / 3.0,
                       deriv_fn=lambda y: y ** 2,
                       monotone_certified=True)
        raise ParameterError(f"unknown builtin nonlinearity {name!r}; "
                             f"known: {', '.join(_BUILTIN_NAMES)}")

    @classmethod
    def from_network(cls, net):
        return cls("network", net=net, monotone_certified=net.monotone)

    @classmethod
    def from_knot_table(cls, knots, values, end_slopes):
        pw = _PiecewiseLinear.from_table(knots, values, end_slopes)
        return cls("knot_table", pw=pw,
                   monotone_certified=bool(np.all(pw.slopes >= 0.0)))

    # -- shape plumbing --------------------------------------------------

    def _check_x(self, x, n):
        if self.kind != "network":
            return None
        d = self._net.spatial_dim
        if x is None:
            return None
        xs = np.asarray(x, dtype=float)
        if xs.ndim == 1:
            if xs.shape[0] != d:
                raise DimensionMismatch("spatial point dimension", d, xs.shape[0])
            return xs
        if xs.shape != (n, d):
            raise DimensionMismatch("spatial batch shape", (n, d), xs.shape)
        return xs

    @staticmethod
    def _flat(y):
        arr = np.asarray(y, dtype=float)
        return arr.reshape(-1), arr.shape, arr.ndim == 0

    @staticmethod
    def _unflat(out, shape, scalar):
        return float(out[0]) if scalar else out.reshape(shape)

    # -- pointwise operations ---------------------------------------------

    def value(self, x, y):
        """f(x, y); exact up to floating arithmetic."""
        yf, shape, scalar = self._flat(y)
        x = self._check_x(x, yf.size)
        if self.kind == "network":
            out = nnet.value(self._net, x, yf)
        elif self._pw is not None:
            out = self._pw.value(yf)
        else:
            out = self._value_fn(yf)
        return self._unflat(out, shape, scalar)

    def dir_deriv(self, x, y, h):
        """Exact directional derivative f'_x(y; h); positively homogeneous in h."""
        yf, shape, scalar = self._flat(y)
        x = self._check_x(x, yf.size)
        if self.kind == "network":
            out = nnet.dir_deriv(self._net, x, yf, h)
        else:
            hf = np.broadcast_to(np.asarray(h, dtype=float).reshape(-1) if np.ndim(h) else h, yf.shape)
            if self._pw is not None:
                minus, plus = self._pw.one_sided(yf)
                out = np.where(hf >= 0.0, plus, minus) * hf
            else:
                out = self._deriv_fn(yf) * hf
        return self._unflat(out, shape, scalar)

    def one_sided_derivs(self, x, y):
        """(f'_-, f'_+) with f'_- = -f'(y; -1) and f'_+ = f'(y; 1)."""
        yf, shape, scalar = self._flat(y)
        x = self._check_x(x, yf.size)
        if self.kind == "network":
            minus = -nnet.dir_deriv(self._net, x, yf, -1.0)
            plus = nnet.dir_deriv(self._net, x, yf, 1.0)
        elif self._pw is not None:
            minus, plus = self._pw.one_sided(yf)
        else:
            minus = plus = self._deriv_fn(yf)
        return (self._unflat(minus, shape, scalar), self._unflat(plus, shape, scalar))

    def clarke_interval(self, x, y):
        """[min(f'_-, f'_+), max(f'_-, f'_+)], the Clarke gradient of a PC1 function."""
        minus, plus = self.one_sided_derivs(x, y)
        return np.minimum(minus, plus), np.maximum(minus, plus)

    def weak_gradient_y(self, x, y):
        """A.e. y-derivative with the sigma'(0) = 0 convention (tables take
        the left slope at a knot)."""
        yf, shape, scalar = self._flat(y)
        x = self._check_x(x, yf.size)
        if self.kind == "network":
            out = nnet.weak_gradient_y(self._net, x, yf)
        elif self._pw is not None:
            out, _ = self._pw.one_sided(yf)
        else:
            out = self._deriv_fn(yf)
        return self._unflat(out, shape, scalar)

    # -- kink geometry ----------------------------------------------------

    @property
    def kinks(self):
        """Sorted kink locations for 1-D variants; None for networks."""
        if self.kind == "network":
            return None
        if self._pw is None:
            return np.asarray([], dtype=float)
        return self._pw.kinks

    def kink_distance(self, x, y):
        """Distance in y to the nearest kink (first-order preactivation
        estimate for networks; +inf where kink-free)."""
        yf, shape, scalar = self._flat(y)
        x = self._check_x(x, yf.size)
        if self.kind == "network":
            out = nnet.kink_distance(self._net, x, yf)
        else:
            ks = self.kinks
            if ks.size == 0:
                out = np.full(yf.shape, np.inf)
            else:
                out = np.min(np.abs(yf[:, None] - ks[None, :]), axis=1)
        return self._unflat(out, shape, scalar)

    def slope_hull(self, x, y, radius):
        """Min/max slope over the window [y - radius, y + radius].

        Exact for 1-D piecewise-linear variants; networks and analytic
        variants are sampled at the window endpoints and center.
        """
        yf, shape, scalar = self._flat(y)
        if self._pw is not None:
            lo, hi = self._pw.slope_hull(yf, radius)
        else:
            los, his = [], []
            for dy in (-radius, 0.0, radius):
                m, p = self.one_sided_derivs(x, yf + dy)
                los.append(np.minimum(m, p))
                his.append(np.maximum(m, p))
            lo = np.minimum.reduce(los)
            hi = np.maximum.reduce(his)
        return (self._unflat(lo, shape, scalar), self._unflat(hi, shape, scalar))


# -- mollified smoothing ------------------------------------------------------

def _expand_x(nl, x, n, q):
    if nl.kind != "network":
        return None
    d = nl._net.spatial_dim
    if x is None:
        return None
    xs = np.asarray(x, dtype=float)
    if xs.ndim == 1:
        return np.broadcast_to(xs, (n * q, d))
    return np.repeat(xs, q, axis=0)


def mollified_eval(nl, moll, x, y):
    """(rho_eps * f(x, .))(y) by composite Gauss-Legendre over the window.

    Panel edges are split at the tabulated kinks of 1-D variants; network
    windows use uniform panels (documented accuracy trade-off).  Equals the
    exact value, up to quadrature tolerance, whenever the window is
    kink-free.
    """
    yf, shape, scalar = Nonlinearity._flat(y)
    cuts = nl.kinks
    pts, wts = moll.window_rule(yf, cuts=cuts)
    rho = moll.density(yf[:, None] - pts)
    n, q = pts.shape
    if nl.kind == "network":
        xs = _expand_x(nl, x, n, q)
        vals = nnet.value(nl._net, xs, pts.reshape(-1)).reshape(n, q)
    elif nl._pw is not None:
        vals = nl._pw.value(pts)
    else:
        vals = nl._value_fn(pts)
    out = np.sum(wts * rho * vals, axis=1)
    return Nonlinearity._unflat(out, shape, scalar)


def mollified_deriv_y(nl, moll, x, y):
    """y-derivative of the mollified value: rho_eps convolved with the a.e.
    slope (valid since f is PC1 in y)."""
    yf, shape, scalar = Nonlinearity._flat(y)
    cuts = nl.kinks
    pts, wts = moll.window_rule(yf, cuts=cuts)
    rho = moll.density(yf[:, None] - pts)
    n, q = pts.shape
    if nl.kind == "network":
        xs = _expand_x(nl, x, n, q)
        slopes = nnet.weak_gradient_y(nl._net, xs, pts.reshape(-1)).reshape(n, q)
    elif nl._pw is not None:
        slopes, _ = nl._pw.one_sided(pts)
    else:
        slopes = nl._deriv_fn(pts)
    out = np.sum(wts * rho * slopes, axis=1)
    return Nonlinearity._unflat(out, shape, scalar)


# -- smoothing descriptors and evaluation views -------------------------------

class MollifiedSmoothing:
    """Smoothing by convolution with a bump mollifier; preserves monotonicity."""

    def __init__(self, mollifier):
        if not isinstance(mollifier, Mollifier):
            mollifier = Mollifier(mollifier)
        self.mollifier = mollifier

    @property
    def epsilon(self):
        return self.mollifier.epsilon


class CanonicalSmoothing:
    """Smoothing of the ReLU activation itself (networks only); whole-network
    monotonicity in y is not guaranteed and must be re-checked."""

    def __init__(self, epsilon):
        if epsilon <= 0:
            raise ParameterError(f"canonical smoothing epsilon must be positive, got {epsilon}")
        self.epsilon = float(epsilon)


class _MollifiedView:
    def __init__(self, nl, smoothing):
        self.nl = nl
        self.mollifier = smoothing.mollifier
        self.epsilon = smoothing.epsilon

    def value(self, x, y):
        return mollified_eval(self.nl, self.mollifier, x, y)

    def slope(self, x, y):
        return mollified_deriv_y(self.nl, self.mollifier, x, y)

    def one_sided_derivs(self, x, y):
        s = self.slope(x, y)
        return s, s


class _CanonicalView:
    def __init__(self, nl, smoothing):
        if nl.kind != "network":
            raise ParameterError("canonical smoothing applies to network nonlinearities only")
        self.nl = nl
        self.epsilon = smoothing.epsilon

    def value(self, x, y):
        yf, shape, scalar = Nonlinearity._flat(y)
        out = nnet.canonical_smooth_value(self.nl._net, self.epsilon,
                                          self.nl._check_x(x, yf.size), yf)
        return Nonlinearity._unflat(out, shape, scalar)

    def slope(self, x, y):
        yf, shape, scalar = Nonlinearity._flat(y)
        out = nnet.canonical_smooth_deriv(self.nl._net, self.epsilon,
                                          self.nl._check_x(x, yf.size), yf)
        return Nonlinearity._unflat(out, shape, scalar)

    def one_sided_derivs(self, x, y):
        s = self.slope(x, y)
        return s, s


def smoothing_view(nl, smoothing):
    """Evaluation view (value/slope) of a smoothed nonlinearity."""
    if isinstance(smoothing, MollifiedSmoothing):
        return _MollifiedView(nl, smoothing)
    if isinstance(smoothing, Mollifier):
        return _MollifiedView(nl, MollifiedSmoothing(smoothing))
    if isinstance(smoothing, CanonicalSmoothing):
        return _CanonicalView(nl, smoothing)
    raise ParameterError(f"unknown smoothing {smoothing!r}")


# -- monotonicity certification ------------------------------------------------

class MonotonicityReport:
    """Outcome of a sampling-based monotonicity check (not a proof)."""

    def __init__(self, min_slope, max_slope, witness_x, witness_y, certified,
                 y_count, x_count, tol):
        self.min_slope = min_slope
        self.max_slope = max_slope
        self.witness_x = witness_x
        self.witness_y = witness_y
        self.certified = certified
        self.y_count = y_count
        self.x_count = x_count
        self.tol = tol

    def __repr__(self):
        tag = "certified" if self.certified else "NOT certified"
        return (f"MonotonicityReport({tag}, min_slope={self.min_slope:.3e} "
                f"at y={self.witness_y:.6g}, grid {self.x_count}x{self.y_count})")


def _preactivation_roots(net, x_row, ys):
    """y-locations in [ys[0], ys[-1]] where some hidden preactivation
    changes sign along y, located by bisection per sampled bracket."""
    acts = nnet.preactivations(net, nnet.stack_inputs(net, x_row, ys))[:-1]
    roots = []
    for l, a in enumerate(acts):
        flip = a[:-1, :] * a[1:, :] < 0.0
        for i, j in zip(*np.nonzero(flip)):
            lo, hi = ys[i], ys[i + 1]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                am = nnet.preactivations(net, nnet.stack_inputs(net, x_row, [mid]))[l][0, j]
                if am * a[i, j] <= 0.0:
                    hi = mid
                else:
                    lo = mid
            roots.append(0.5 * (lo + hi))
    return roots


def check_monotone(nl, x_samples=None, y_halfwidth=10.0, y_samples=257,
                   tol_mono=1e-12):
    """Sample one-sided slopes of y -> f(x, y) on [-M, M] and certify
    monotonicity when the minimum exceeds -tol_mono.

    1-D variants include every kink location in the sample; networks get a
    uniform y-grid refined by preactivation sign-change bisection per
    sampled x.  A failed check is a report, not an error; the nonlinearity's
    monotone_certified flag is set to the outcome.
    """
    if y_halfwidth <= 0 or y_samples < 2:
        raise ParameterError("need y_halfwidth > 0 and y_samples >= 2")
    base = np.linspace(-y_halfwidth, y_halfwidth, int(y_samples))
    if nl.kind == "network":
        if x_samples is None:
            xs_list = [None]
        else:
            xs = np.asarray(x_samples, dtype=float)
            xs_list = [xs] if xs.ndim == 1 else list(xs)
    else:
        ks = nl.kinks
        base = np.unique(np.concatenate([base, ks[(ks >= -y_halfwidth) & (ks <= y_halfwidth)]]))
        xs_list = [None]

    min_slope = np.inf
    max_slope = -np.inf
    witness = (None, 0.0)
    for x_row in xs_list:
        ys = base
        if nl.kind == "network":
            roots = _preactivation_roots(nl._net, x_row, base)
            if roots:
                ys = np.unique(np.concatenate([base, np.asarray(roots)]))
        minus, plus = nl.one_sided_derivs(x_row, ys)
        both = np.minimum(minus, plus)
        k = int(np.argmin(both))
        if both[k] < min_slope:
            min_slope = float(both[k])
            witness = (x_row, float(ys[k]))
        max_slope = max(max_slope, float(np.max(np.maximum(minus, plus))))

    certified = min_slope >= -tol_mono
    nl.monotone_certified = certified
    return MonotonicityReport(min_slope, max_slope, witness[0], witness[1],
                              certified, y_count=len(base), x_count=len(xs_list),
                              tol=tol_mono)
