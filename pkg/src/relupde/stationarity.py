"""Residual certification of B-, weak, C-, and strong stationarity, the
constraint qualifications, and the implication cross-checks.

None of this proves stationarity: each check quantifies how far a
candidate triple is from the corresponding system, at explicit tolerances.
Measure-zero conditions are represented by node-fraction surrogates.

Near-kink handling: a node whose state value is within ``snap_tol`` of a
kink carries a smoothed slope that brackets against the Clarke interval at
the *kink* (the mollifier-limit lemma), so the C- and strong checks compare
such nodes against the hull of slopes over that window; nodes exactly at a
kink (within 1e-9) enforce the interval / two-sided sign condition itself.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, inner_l2, norm_l2
from .optimize import extract_multipliers, natural_residual
from .rng import STREAM_DIRECTIONS, rng_stream
from .statesolve import solve_sensitivity

EXACT_KINK_TOL = 1e-9

DEFAULT_TOLERANCES = {
    "tol_B": 1e-6,
    "tol_weak": 1e-6,
    "tol_C": 1e-3,       # limited by the finite smoothing parameter
    "tol_strong": 1e-3,
    "tol_act": 1e-8,
    "kink_tol": 1e-6,
}


@dataclass
class StationarityReport:
    b_min_directional: float = None
    b_witness: str = None
    weak_adjoint_residual: float = None
    weak_vi_or_mu_residual: float = None
    zeta_negativity: float = None
    c_inclusion_max: float = None
    c_witness_node: int = None
    strong_sign_max: float = None
    strong_witness_node: int = None
    active_set_fraction: float = None
    omega_f_fraction: float = None
    intersection_fraction: float = None
    cq_holds: bool = None
    cqf_holds: bool = None
    near_kink_fraction: float = None
    snap_tol: float = None
    verdicts: dict = field(default_factory=dict)
    inconsistencies: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self, indent=2):
        """Stable field order so equal runs serialize byte-identically."""
        order = ["b_min_directional", "b_witness", "weak_adjoint_residual",
                 "weak_vi_or_mu_residual", "zeta_negativity", "c_inclusion_max",
                 "c_witness_node", "strong_sign_max", "strong_witness_node",
                 "active_set_fraction", "omega_f_fraction", "intersection_fraction",
                 "cq_holds", "cqf_holds", "near_kink_fraction", "snap_tol",
                 "verdicts", "inconsistencies", "tolerances", "notes"]
        doc = {k: getattr(self, k) for k in order}
        return json.dumps(doc, indent=indent, sort_keys=False)


def sample_contingent_directions(u, bounds, count, seed, p=None, alpha=None,
                                 tol_act=1e-8):
    """Seeded Gaussian fields sign-corrected into the contingent cone of the
    box (h >= 0 on the lower-active set, h <= 0 on the upper-active set),
    normalized to unit L2; prepends the deterministic steepest feasible
    direction -(p + alpha u) when an adjoint is available."""
    gen = rng_stream(seed, STREAM_DIRECTIONS)
    grid = u.grid
    lower = upper = None
    if bounds is not None:
        u_a, u_b = bounds
        lower = u.values <= u_a.values + tol_act
        upper = u.values >= u_b.values - tol_act

    def correct(vals):
        if bounds is not None:
            vals = np.where(lower, np.abs(vals), vals)
            vals = np.where(upper, -np.abs(vals), vals)
        h = GridFunction(grid, vals)
        n = norm_l2(h)
        return h * (1.0 / n) if n > 0 else h

    directions = []
    if p is not None and alpha is not None:
        directions.append(correct(-(p.values + alpha * u.values)))
    for _ in range(int(count)):
        directions.append(correct(gen.standard_normal(grid.size)))
    return directions


def directional_objective_derivative(problem, u, y, h):
    """J'(u; h) = <y - g, S'(u; h)> + alpha <u, h> via a sensitivity solve."""
    z = solve_sensitivity(problem, y, h)
    return inner_l2(y - problem.g, z) + problem.alpha * inner_l2(u, h)


def check_B(problem, u, y, directions, tol, report):
    """Minimum directional derivative over the sampled contingent directions;
    passes when >= -tol (B-stationarity is sampled, not proven)."""
    best = np.inf
    witness = None
    for k, h in enumerate(directions):
        d = directional_objective_derivative(problem, u, y, h)
        if d < best:
            best = d
            witness = k
    report.b_min_directional = float(best)
    report.b_witness = (f"direction {witness}" if witness is not None else None)
    report.tolerances["tol_B"] = tol
    return report


def check_weak(problem, u, y, zeta, p, tol, report):
    """Adjoint-equation residual, zeta sign defect, and the control condition
    (mu-system residuals with bounds, plain VI residual without)."""
    from .grid import apply_laplacian
    rhs = y - problem.g
    lhs = apply_laplacian(p).values + zeta.values * p.values
    report.weak_adjoint_residual = float(
        np.sqrt(problem.grid.cell_measure) * np.linalg.norm(lhs - rhs.values)
        / (1.0 + norm_l2(rhs)))
    report.zeta_negativity = float(np.max(np.abs(np.minimum(zeta.values, 0.0)))) \
        if zeta.values.size else 0.0
    if problem.bounds is not None:
        u_a, u_b = problem.bounds
        mu_a, mu_b, comp = extract_multipliers(u, p, problem.alpha, problem.bounds)
        # stationarity p + alpha u + mu = 0 holds identically by extraction;
        # the informative defects are feasibility, signs, complementarity
        feas = max(float(np.max(np.maximum(u_a.values - u.values, 0.0))),
                   float(np.max(np.maximum(u.values - u_b.values, 0.0))))
        report.weak_vi_or_mu_residual = max(feas, comp["complementarity_a"],
                                            comp["complementarity_b"])
    else:
        grad = GridFunction(u.grid, p.values + problem.alpha * u.values)
        report.weak_vi_or_mu_residual = natural_residual(u, grad, None)
    report.tolerances["tol_weak"] = tol
    return report


def _interval_bounds(problem, y, snap_tol):
    """Per-node Clarke bounds: exact one-sided slopes, widened to the hull
    over [y - snap_tol, y + snap_tol] at near-kink nodes."""
    coords = problem.grid.coordinates()
    minus, plus = problem.nl.one_sided_derivs(coords, y.values)
    lo = np.minimum(minus, plus)
    hi = np.maximum(minus, plus)
    dist = problem.nl.kink_distance(coords, y.values)
    near = dist <= snap_tol
    if np.any(near):
        hlo, hhi = problem.nl.slope_hull(coords, y.values, snap_tol)
        lo = np.where(near, np.minimum(lo, hlo), lo)
        hi = np.where(near, np.maximum(hi, hhi), hi)
    return lo, hi, dist, near


def check_C(problem, u, y, zeta, tol, report, snap_tol=None):
    """Pointwise Clarke inclusion zeta(x) in [lower, upper] slope bounds."""
    if snap_tol is None:
        snap_tol = report.snap_tol or DEFAULT_TOLERANCES["kink_tol"]
    lo, hi, _, near = _interval_bounds(problem, y, snap_tol)
    defect = np.maximum(np.maximum(lo - zeta.values, zeta.values - hi), 0.0)
    k = int(np.argmax(defect))
    report.c_inclusion_max = float(defect[k])
    report.c_witness_node = k
    report.near_kink_fraction = float(np.mean(near))
    report.snap_tol = snap_tol
    report.tolerances["tol_C"] = tol
    return report


def check_strong(problem, u, y, zeta, p, tol, report, snap_tol=None):
    """Two-sided sign condition f'_+ p <= zeta p <= f'_- p, nodewise.

    Exact-kink nodes enforce the kink's one-sided slopes; near-kink nodes
    (finite-eps pollution zone) are scored by |p| times their C-inclusion
    defect; differentiable nodes reduce to |p| |zeta - f'|."""
    if snap_tol is None:
        snap_tol = report.snap_tol or DEFAULT_TOLERANCES["kink_tol"]
    coords = problem.grid.coordinates()
    minus, plus = problem.nl.one_sided_derivs(coords, y.values)
    pv = p.values
    zp = zeta.values * pv
    two_sided = np.maximum(np.maximum(plus * pv - zp, zp - minus * pv), 0.0)

    dist = problem.nl.kink_distance(coords, y.values)
    exact = dist <= EXACT_KINK_TOL
    near = (dist <= snap_tol) & ~exact
    if np.any(near):
        lo, hi = problem.nl.slope_hull(coords, y.values, snap_tol)
        incl = np.maximum(np.maximum(lo - zeta.values, zeta.values - hi), 0.0)
        two_sided = np.where(near, np.abs(pv) * incl, two_sided)

    k = int(np.argmax(two_sided))
    report.strong_sign_max = float(two_sided[k])
    report.strong_witness_node = k
    report.snap_tol = snap_tol
    report.tolerances["tol_strong"] = tol
    return report


def _dilate(mask, grid):
    """One-node dilation (discrete surrogate of the closure of the active set)."""
    a = grid.reshape(mask)
    out = a.copy()
    for axis in range(grid.dim):
        sl_lo = [slice(None)] * grid.dim
        sl_hi = [slice(None)] * grid.dim
        sl_lo[axis] = slice(1, None)
        sl_hi[axis] = slice(0, -1)
        out[tuple(sl_lo)] |= a[tuple(sl_hi)]
        out[tuple(sl_hi)] |= a[tuple(sl_lo)]
    return out.reshape(-1)


def check_cq(problem, u, y, tol_act, kink_tol, report):
    """Node-fraction surrogates of the measure conditions: active-set
    fraction (CQ) and the kink-set / dilated-active-set intersection (CQ_f).
    No claim about true Lebesgue measure is made."""
    m = problem.grid.size
    if problem.bounds is None:
        active = np.zeros(m, dtype=bool)
    else:
        u_a, u_b = problem.bounds
        active = (u.values <= u_a.values + tol_act) | (u.values >= u_b.values - tol_act)
    coords = problem.grid.coordinates()
    dist = problem.nl.kink_distance(coords, y.values)
    omega_f = dist <= kink_tol
    inter = omega_f & _dilate(active, problem.grid)
    report.active_set_fraction = float(np.mean(active))
    report.omega_f_fraction = float(np.mean(omega_f))
    report.intersection_fraction = float(np.mean(inter))
    report.cq_holds = bool(report.active_set_fraction == 0.0)
    report.cqf_holds = bool(report.intersection_fraction == 0.0)
    report.tolerances["tol_act"] = tol_act
    report.tolerances["kink_tol"] = kink_tol
    return report


def assemble_verdicts(report, has_bounds):
    """Per-condition verdicts plus the numerical implication cross-checks:
    strong => B; B + C + CQ_f => strong; B + (CQ or empty kink set with box
    bounds) => strong.  A violated implication is flagged, never dropped."""
    tol = {**DEFAULT_TOLERANCES, **report.tolerances}

    def verdict(value, bound):
        if value is None:
            return "not_applicable"
        return "pass" if value <= bound else "fail"

    v = {}
    v["B"] = ("not_applicable" if report.b_min_directional is None
              else ("pass" if report.b_min_directional >= -tol["tol_B"] else "fail"))
    if report.weak_adjoint_residual is None:
        v["weak"] = "not_applicable"
    else:
        worst = max(report.weak_adjoint_residual, report.weak_vi_or_mu_residual,
                    report.zeta_negativity)
        v["weak"] = "pass" if worst <= tol["tol_weak"] else "fail"
    v["C"] = verdict(report.c_inclusion_max, tol["tol_C"])
    if v["C"] == "pass" and v["weak"] != "pass":
        v["C"] = v["weak"]  # C-stationarity presupposes weak stationarity
    v["strong"] = verdict(report.strong_sign_max, tol["tol_strong"])
    if v["strong"] == "pass" and v["C"] != "pass":
        v["strong"] = v["C"]
    v["CQ"] = ("not_applicable" if report.cq_holds is None
               else ("pass" if report.cq_holds else "fail"))
    v["CQ_f"] = ("not_applicable" if report.cqf_holds is None
                 else ("pass" if report.cqf_holds else "fail"))
    report.verdicts = v

    inc = []
    if v["strong"] == "pass" and v["B"] == "fail":
        inc.append("strong stationarity holds but the B check failed "
                   "(contradicts strong => B)")
    if v["B"] == "pass" and v["C"] == "pass" and v["CQ_f"] == "pass" \
            and v["strong"] == "fail":
        inc.append("B + C + CQ_f hold but the sign condition failed "
                   "(contradicts B + C + CQ_f => strong)")
    if v["B"] == "pass" and v["strong"] == "fail":
        if v["CQ"] == "pass" or (has_bounds and report.omega_f_fraction == 0.0):
            inc.append("B holds under the constraint qualification but the "
                       "sign condition failed (contradicts B + CQ => strong)")
    report.inconsistencies = inc
    report.tolerances = tol
    return report


def exit_code(report, requested=("B", "weak", "C", "strong")):
    """CI contract: 0 = all requested checks pass, 2 = stationarity failure,
    3 = implication inconsistency."""
    if report.inconsistencies:
        return 3
    for name in requested:
        if report.verdicts.get(name) == "fail":
            return 2
    return 0
