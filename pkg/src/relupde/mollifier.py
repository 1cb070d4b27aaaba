"""Compactly supported bump mollifier with composite Gauss-Legendre quadrature.

The convolution window [y - eps, y + eps] is covered by ``quad_nodes``
panels, each carrying an 8-point Gauss-Legendre rule.  Panel edges can be
split at known kink locations so that piecewise-smooth integrands are
integrated panel-by-panel on smooth pieces.
"""

import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import ParameterError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _bump_normalization():
    # \int_{-1}^{1} exp(-1/(1-t^2)) dt has no closed form; computed once.
    # quad reports roundoff near the flat endpoints; the value is still
    # accurate to ~5e-15.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(lambda t: np.exp(-1.0 / (1.0 - t * t)), -1.0, 1.0,
                      epsabs=1e-15, epsrel=1e-14, limit=200)
    return 1.0 / val


BUMP_NORMALIZATION = _bump_normalization()


class Mollifier:
    """rho_eps(t) = (C/eps) * exp(-1/(1-(t/eps)^2)) for |t| < eps, else 0.

    ``quad_nodes`` is the number of quadrature panels per window (default
    64, 8-point Gauss-Legendre each); ``normalization`` is the constant C
    making the density integrate to one.
    """

    def __init__(self, epsilon, quad_nodes=64):
        if epsilon <= 0:
            raise ParameterError(f"mollifier epsilon must be positive, got {epsilon}")
        if int(quad_nodes) < 1:
            raise ParameterError(f"quad_nodes must be >= 1, got {quad_nodes}")
        self.epsilon = float(epsilon)
        self.quad_nodes = int(quad_nodes)
        self.normalization = BUMP_NORMALIZATION

    def density(self, t):
        """Vectorized rho_eps."""
        t = np.asarray(t, dtype=float)
        scaled = t / self.epsilon
        out = np.zeros_like(scaled)
        inside = np.abs(scaled) < 1.0
        s = scaled[inside]
        out[inside] = (self.normalization / self.epsilon) * np.exp(-1.0 / (1.0 - s * s))
        return out

    def window_rule(self, centers, cuts=None):
        """Quadrature points and weights covering [c-eps, c+eps] per center.

        centers: (n,) array of window centers.
        cuts: optional ascending 1-D array of abscissae at which panel edges
        are inserted (clipped per window; cuts outside a window collapse to
        zero-width panels with zero weight).

        Returns (points, weights), both of shape (n, q).
        """
        centers = np.atleast_1d(np.asarray(centers, dtype=float))
        eps = self.epsilon
        lo = centers - eps
        hi = centers + eps
        frac = np.linspace(0.0, 1.0, self.quad_nodes + 1)
        edges = lo[:, None] + (2.0 * eps) * frac[None, :]
        if cuts is not None and len(cuts) > 0:
            cuts = np.asarray(cuts, dtype=float)
            extra = np.clip(cuts[None, :], lo[:, None], hi[:, None])
            edges = np.sort(np.concatenate([edges, extra], axis=1), axis=1)
        mid = 0.5 * (edges[:, :-1] + edges[:, 1:])
        half = 0.5 * (edges[:, 1:] - edges[:, :-1])
        pts = mid[:, :, None] + half[:, :, None] * _GL_NODES[None, None, :]
        wts = half[:, :, None] * _GL_WEIGHTS[None, None, :]
        n = centers.shape[0]
        return pts.reshape(n, -1), wts.reshape(n, -1)

    def convolve(self, f, centers, cuts=None):
        """\\int rho_eps(c - z) f(z) dz for each center c; f maps (n, q) -> (n, q)."""
        centers = np.atleast_1d(np.asarray(centers, dtype=float))
        pts, wts = self.window_rule(centers, cuts)
        rho = self.density(centers[:, None] - pts)
        return np.sum(wts * rho * f(pts), axis=1)
