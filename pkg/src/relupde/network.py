"""Feedforward ReLU networks N(x, y).

The scalar argument y is always the LAST input coordinate (the routines
below differentiate with respect to it).  Evaluation and the directional
derivative follow the exact layer recursions for piecewise-affine
functions; the weak gradient uses the a.e. chain product with the
convention sigma'(0) = 0.
"""

import json

import numpy as np

from .errors import DimensionMismatch, NetworkParseError, ParameterError
from .rng import STREAM_TRAINING, rng_stream


class ReluNetwork:
    """Layered (weights, biases) parameterization; output dimension 1.

    ``monotone`` records that a monotonicity certificate holds (set either
    by construction, see :func:`construct_interpolant_net`, or by a passed
    sampling check).
    """

    def __init__(self, weights, biases, monotone=False):
        ws = tuple(np.array(W, dtype=float, ndmin=2) for W in weights)
        bs = tuple(np.asarray(b, dtype=float).reshape(-1) for b in biases)
        if len(ws) == 0 or len(ws) != len(bs):
            raise ParameterError("network needs matching, nonempty weight/bias lists")
        for i, (W, b) in enumerate(zip(ws, bs)):
            if W.shape[0] != b.shape[0]:
                raise DimensionMismatch(f"layer {i}: bias length", W.shape[0], b.shape[0])
            if i > 0 and W.shape[1] != ws[i - 1].shape[0]:
                raise DimensionMismatch(
                    f"layer {i}: input width", ws[i - 1].shape[0], W.shape[1])
        if ws[-1].shape[0] != 1:
            raise DimensionMismatch("output layer rows", 1, ws[-1].shape[0])
        self.weights = ws
        self.biases = bs
        self.monotone = bool(monotone)

    @property
    def depth(self):
        return len(self.weights)

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def spatial_dim(self):
        return self.input_dim - 1

    def widths(self):
        return [self.input_dim] + [W.shape[0] for W in self.weights]


def stack_inputs(net, x, y):
    """Assemble the (n, d+1) input batch; x may be None for nets with zero
    spatial weights (zeros are substituted)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    d = net.spatial_dim
    if x is None:
        xs = np.zeros((n, d))
    else:
        xs = np.asarray(x, dtype=float)
        if xs.ndim == 1:
            xs = np.broadcast_to(xs, (n, xs.shape[0]))
        if xs.shape != (n, d):
            raise DimensionMismatch("network spatial input", (n, d), xs.shape)
    return np.concatenate([xs, y[:, None]], axis=1)


def preactivations(net, Z):
    """Per-layer preactivation batches a_l = W_l z_{l-1} + b_l (the last
    entry is the affine output)."""
    acts = []
    cur = Z
    for l in range(net.depth):
        a = cur @ net.weights[l].T + net.biases[l]
        acts.append(a)
        if l < net.depth - 1:
            cur = np.maximum(a, 0.0)
    return acts

def value(net, x, y):
    """Exact network evaluation N(x, y) on a batch."""
    Z = stack_inputs(net, x, y)
    return preactivations(net, Z)[-1][:, 0]


def dir_deriv(net, x, y, h):
    """Exact directional derivative N'_x(y; h) via the layer recursion.

    At vanishing preactivations the kink term max(0, .) of the recursion is
    applied literally (one fixed selection when several preactivations
    vanish at once).
    """
    Z = stack_inputs(net, x, y)
    acts = preactivations(net, Z)
    h = np.broadcast_to(np.asarray(h, dtype=float), (Z.shape[0],))
    d = h[:, None] * net.weights[0][:, -1][None, :]
    for l in range(net.depth - 1):
        a = acts[l]
        d = np.where(a > 0.0, d, 0.0) + np.where(a == 0.0, np.maximum(d, 0.0), 0.0)
        d = d @ net.weights[l + 1].T
    return d[:, 0]


def weak_gradient_y(net, x, y):
    """A.e. y-derivative: chain product of 1_{(0,inf)} factors, sigma'(0)=0."""
    Z = stack_inputs(net, x, y)
    acts = preactivations(net, Z)
    g = np.broadcast_to(net.weights[0][:, -1][None, :], acts[0].shape).copy()
    for l in range(net.depth - 1):
        g = np.where(acts[l] > 0.0, g, 0.0)
        g = g @ net.weights[l + 1].T
    return g[:, 0]


def kink_distance(net, x, y):
    """Surrogate distance (in y) to the nearest kink: min over hidden units
    of |preactivation| / |d preactivation / dy|, the first-order root
    estimate along the y direction."""
    Z = stack_inputs(net, x, y)
    acts = preactivations(net, Z)
    g = np.broadcast_to(net.weights[0][:, -1][None, :], acts[0].shape).copy()
    dist = np.full(Z.shape[0], np.inf)
    tiny = 1e-300
    for l in range(net.depth - 1):
        est = np.abs(acts[l]) / np.maximum(np.abs(g), tiny)
        dist = np.minimum(dist, est.min(axis=1))
        g = np.where(acts[l] > 0.0, g, 0.0)
        g = g @ net.weights[l + 1].T
    return dist


# -- canonical smoothing ----------------------------------------------------
#
# The activation itself is replaced by the C^1 quadratic blend
#   sigma_eps(t) = 0            for t <= -eps,
#                  (t+eps)^2/4eps for |t| <= eps,
#                  t            for t >= eps,
# cheap and closed-form, but whole-network monotonicity in y is NOT
# preserved in general and must be re-checked by the caller.

def _sigma_eps(a, eps):
    return np.where(a <= -eps, 0.0, np.where(a >= eps, a, (a + eps) ** 2 / (4.0 * eps)))


def _sigma_eps_prime(a, eps):
    return np.where(a <= -eps, 0.0, np.where(a >= eps, 1.0, (a + eps) / (2.0 * eps)))


def canonical_smooth_value(net, epsilon, x, y):
    if epsilon <= 0:
        raise ParameterError(f"canonical smoothing epsilon must be positive, got {epsilon}")
    Z = stack_inputs(net, x, y)
    cur = Z
    for l in range(net.depth - 1):
        cur = _sigma_eps(cur @ net.weights[l].T + net.biases[l], epsilon)
    return (cur @ net.weights[-1].T + net.biases[-1])[:, 0]


def canonical_smooth_deriv(net, epsilon, x, y):
    if epsilon <= 0:
        raise ParameterError(f"canonical smoothing epsilon must be positive, got {epsilon}")
    Z = stack_inputs(net, x, y)
    cur = Z
    g = np.broadcast_to(net.weights[0][:, -1][None, :], (Z.shape[0], net.weights[0].shape[0])).copy()
    for l in range(net.depth - 1):
        a = cur @ net.weights[l].T + net.biases[l]
        g = _sigma_eps_prime(a, epsilon) * g
        g = g @ net.weights[l + 1].T
        cur = _sigma_eps(a, epsilon)
    return g[:, 0]


# -- construction and training ----------------------------------------------

def construct_interpolant_net(knots, values, end_slopes, spatial_dim=1):
    """One-hidden-layer net reproducing the piecewise-linear interpolant
    through (knots, values) with prescribed end slopes.

    Realizes c0 + s_left*y + sum_i a_i * max(0, y - t_i) with zero spatial
    weights; the linear term uses a +y/-y unit pair only when s_left != 0.
    The result is flagged monotone when every induced slope is >= 0.
    """
    knots = np.asarray(knots, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    if knots.size < 1:
        raise ParameterError("need at least one knot")
    if values.shape != knots.shape:
        raise ParameterError(f"values length {values.size} != knots length {knots.size}")
    if knots.size > 1 and not np.all(np.diff(knots) > 0):
        raise ParameterError("knots must be strictly increasing")
    s_left, s_right = float(end_slopes[0]), float(end_slopes[1])
    slopes = np.empty(knots.size + 1)
    slopes[0] = s_left
    slopes[-1] = s_right
    if knots.size > 1:
        slopes[1:-1] = np.diff(values) / np.diff(knots)
    jumps = np.diff(slopes)

    n0 = spatial_dim + 1
    rows = []
    b1 = []
    w2 = []
    for t, a in zip(knots, jumps):
        row = np.zeros(n0)
        row[-1] = 1.0
        rows.append(row)
        b1.append(-t)
        w2.append(a)
    if s_left != 0.0:
        for sign, wout in ((1.0, s_left), (-1.0, -s_left)):
            row = np.zeros(n0)
            row[-1] = sign
            rows.append(row)
            b1.append(0.0)
            w2.append(wout)
    b2 = values[0] - s_left * knots[0]
    net = ReluNetwork([np.array(rows), np.array([w2])],
                      [np.array(b1), np.array([b2])],
                      monotone=bool(np.all(slopes >= 0.0)))
    return net


class TrainResult:
    """Trained network plus the loss record; ``network`` is the best iterate."""

    def __init__(self, network, final_loss, best_loss, loss_history):
        self.network = network
        self.final_loss = final_loss
        self.best_loss = best_loss
        self.loss_history = loss_history

    @property
    def final_rms(self):
        return float(np.sqrt(self.final_loss))

    @property
    def best_rms(self):
        return float(np.sqrt(self.best_loss))


def train_net(data, arch, learning_rate=0.05, iterations=2000, seed=0):
    """Full-batch gradient descent on the mean squared loss.

    data: (x, y, f) arrays with x of shape (n, d), y and f of shape (n,).
    arch: layer widths [d+1, ..., 1].  Gradients use the a.e. derivative
    (sigma'(0) = 0).  Deterministic for a fixed seed; no monotonicity
    guarantee (check separately).
    """
    x, y, f = data
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    f = np.asarray(f, dtype=float).reshape(-1)
    if y.size == 0:
        raise ParameterError("training data is empty")
    if arch[0] != x.shape[1] + 1:
        raise DimensionMismatch("arch input width", x.shape[1] + 1, arch[0])
    if arch[-1] != 1:
        raise DimensionMismatch("arch output width", 1, arch[-1])

    gen = rng_stream(seed, STREAM_TRAINING)
    Ws = [gen.normal(0.0, np.sqrt(2.0 / arch[l]), size=(arch[l + 1], arch[l]))
          for l in range(len(arch) - 1)]
    bs = [np.zeros(arch[l + 1]) for l in range(len(arch) - 1)]
    Z = np.concatenate([x, y[:, None]], axis=1)
    n = Z.shape[0]
    L = len(Ws)

    best = (np.inf, None)
    history = []
    loss = np.inf
    for _ in range(int(iterations)):
        # forward
        zs = [Z]
        acts = []
        cur = Z
        for l in range(L):
            a = cur @ Ws[l].T + bs[l]
            acts.append(a)
            if l < L - 1:
                cur = np.maximum(a, 0.0)
                zs.append(cur)
        pred = acts[-1][:, 0]
        err = pred - f
        loss = float(np.mean(err * err))
        history.append(loss)
        if loss < best[0]:
            best = (loss, ([W.copy() for W in Ws], [b.copy() for b in bs]))
        # backward, sigma'(0) = 0
        delta = (2.0 / n) * err[:, None]
        for l in range(L - 1, -1, -1):
            gW = delta.T @ zs[l]
            gb = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ Ws[l]) * (acts[l - 1] > 0.0)
            Ws[l] -= learning_rate * gW
            bs[l] -= learning_rate * gb

    best_loss, (bW, bb) = best
    return TrainResult(ReluNetwork(bW, bb), final_loss=loss,
                       best_loss=best_loss, loss_history=history)


# -- weight file i/o ---------------------------------------------------------
#
# Format: { "input_dim": int, "layers": [ {"weights": [[...], ...],
# "bias": [...]}, ... ] }; the final layer must have one output row.
# Floats round-trip exactly (shortest-representation printing).

def save_network(net, path):
    doc = {
        "input_dim": int(net.input_dim),
        "layers": [
            {"weights": [[float(v) for v in row] for row in W],
             "bias": [float(v) for v in b]}
            for W, b in zip(net.weights, net.biases)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_network(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "layers" not in doc:
        raise NetworkParseError(f"{path}: missing field \"layers\"")
    if "input_dim" not in doc:
        raise NetworkParseError(f"{path}: missing field \"input_dim\"")
    weights, biases = [], []
    for i, layer in enumerate(doc["layers"]):
        for field in ("weights", "bias"):
            if field not in layer:
                raise NetworkParseError(f"{path}: layer {i}: missing field \"{field}\"")
        W = np.array(layer["weights"], dtype=float, ndmin=2)
        b = np.asarray(layer["bias"], dtype=float)
        if W.shape[0] != b.shape[0]:
            raise NetworkParseError(
                f"{path}: layer {i}: {W.shape[0]} weight rows but {b.shape[0]} bias entries")
        if i == 0 and W.shape[1] != int(doc["input_dim"]):
            raise NetworkParseError(
                f"{path}: layer 0: {W.shape[1]} columns but input_dim = {doc['input_dim']}")
        if i > 0 and W.shape[1] != weights[i - 1].shape[0]:
            raise NetworkParseError(
                f"{path}: layer {i}: {W.shape[1]} columns do not chain with "
                f"{weights[i - 1].shape[0]} rows of layer {i - 1}")
        weights.append(W)
        biases.append(b)
    if not weights:
        raise NetworkParseError(f"{path}: empty layer list")
    if weights[-1].shape[0] != 1:
        raise NetworkParseError(
            f"{path}: final layer must have exactly one output row, got {weights[-1].shape[0]}")
    return ReluNetwork(weights, biases)
