"""Study drivers: network-approximation lab, mollifier-limit lab, and the
end-to-end optimize-and-check pipeline.

All CSV outputs carry a header row and a trailing #-comment block with the
config hash, seed, and grid, and are byte-identical across runs with equal
seeds.
"""

import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import field_preset
from .errors import ParameterError
from .grid import (GridFunction, holder_seminorm, norm_h1, norm_l2, norm_y,
                   read_csv)
from .grid import write_csv as write_field_csv
from .mollifier import Mollifier
from .network import construct_interpolant_net
from .nonlinearity import MollifiedSmoothing, Nonlinearity, mollified_deriv_y
from .optimize import path_follow, solve_regularized
from .rng import STREAM_MOLLIFIER_STUDY, rng_stream
from .statesolve import solve_state
from .stationarity import (StationarityReport, assemble_verdicts, check_B,
                           check_C, check_cq, check_strong, check_weak,
                           exit_code, sample_contingent_directions)


def _write_csv(path, header, rows, meta):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating))
                             else v for v in row])
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")


def _meta(problem, cfg):
    return {
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "grid": "x".join(str(n) for n in problem.grid.shape),
    }


def _control_field(grid, spec, base_dir):
    if "csv" in spec:
        return read_csv(grid, Path(base_dir) / spec["csv"])
    return field_preset(grid, spec.get("preset", "zero"), float(spec.get("scale", 1.0)))


def run_approx_study(problem, cfg, out_dir, seed=0):
    """Interpolant-network approximation transfer.

    Per knot spacing: build the interpolant net of the target on a uniform
    knot grid, record the dense-grid sup errors (value / slope / their max
    as the W^{1,inf} surrogate), the state-equation transfer errors at a
    fixed control, and optionally the optimizer transfer against the finest
    level.  Returns the CSV path."""
    st = cfg.approx
    if st is None or st.target is None:
        raise ParameterError("approx study requires an [approx_study] config block")
    target = st.target
    if not target.monotone_certified:
        raise ParameterError("approx study target must be monotone certified")
    w0, w1 = st.window
    # dense probe grid, offset so sample points avoid knot/kink locations
    npts = st.dense_points
    ys = w0 + (np.arange(npts) + 0.3711) / npts * (w1 - w0)
    t_vals = target.value(None, ys)
    t_slopes = target.weak_gradient_y(None, ys)

    u = _control_field(problem.grid, st.control, cfg.base_dir)
    target_problem = replace(problem, nl=target)
    y_ref = solve_state(target_problem, u).y

    levels = []
    for delta in st.spacings:
        nknots = int(round((w1 - w0) / delta))
        knots = w0 + delta * np.arange(nknots + 1)
        values = target.value(None, knots)
        sl_left = target.one_sided_derivs(None, knots[0])[0]
        sl_right = target.one_sided_derivs(None, knots[-1])[1]
        net = construct_interpolant_net(knots, values, (sl_left, sl_right),
                                        spatial_dim=problem.grid.dim)
        nl_n = Nonlinearity.from_network(net)

        value_err = float(np.max(np.abs(nl_n.value(None, ys) - t_vals)))
        slope_err = float(np.max(np.abs(nl_n.weak_gradient_y(None, ys) - t_slopes)))

        level_problem = replace(problem, nl=nl_n)
        y_n = solve_state(level_problem, u).y
        diff = y_n - y_ref
        row = {
            "delta": delta,
            "sup_value_err": value_err,
            "sup_slope_err": slope_err,
            "w1inf_err": max(value_err, slope_err),
            "state_h1_err": norm_h1(diff),
            "state_y_err": norm_y(diff),
            "state_holder_err": holder_seminorm(diff, st.holder_exponent),
        }
        if st.run_optimizer:
            smoothing = MollifiedSmoothing(Mollifier(st.eps))
            u_n, info = solve_regularized(level_problem, smoothing, problem.grid.zeros(),
                                          stop_tol=st.stop_tol,
                                          max_iters=cfg.optimize.max_iters)
            row["_u_n"] = u_n
            row["_y_n"] = solve_state(level_problem, u_n).y
        levels.append(row)

    header = ["delta", "sup_value_err", "sup_slope_err", "w1inf_err",
              "state_h1_err", "state_y_err", "state_holder_err"]
    if st.run_optimizer:
        header += ["opt_u_vs_finest", "opt_state_h1_vs_finest"]
        finest = levels[-1]
        for row in levels:
            row["opt_u_vs_finest"] = norm_l2(row["_u_n"] - finest["_u_n"])
            row["opt_state_h1_vs_finest"] = norm_h1(row["_y_n"] - finest["_y_n"])

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "approx_study.csv"
    _write_csv(path, header, [[row[h] for h in header] for row in levels],
               _meta(problem, cfg))
    return path


def _kink_gap(kinks, k):
    others = np.delete(kinks, k)
    if others.size == 0:
        return 1.0
    return min(1.0, 0.5 * float(np.min(np.abs(others - kinks[k]))))


def run_mollifier_study(nl, cfg, out_dir, seed=0, grid_label="-"):
    """Mollified-slope limits at every kink of a 1-D nonlinearity.

    For seeded sequences y_n -> kink (one-sided at rate c/n and
    oscillating) with eps_n ~ 1/n, records the mollified derivative, the
    running limsup/liminf estimates, and whether they bracket within the
    kink's Clarke interval.  Sequence scales stay inside half the gap to
    the nearest other kink, so every window sees this kink alone."""
    st = cfg.mollifier
    if st is None:
        raise ParameterError("mollifier study requires a [mollifier_study] config block")
    kinks = nl.kinks
    if kinks is None:
        raise ParameterError("mollifier study needs a 1-D nonlinearity (not a network)")
    if kinks.size == 0:
        raise ParameterError("mollifier study target has no kinks")

    gen = rng_stream(seed, STREAM_MOLLIFIER_STUDY)
    modes = ("above", "below", "oscillating")
    rows = []
    for k, kink in enumerate(kinks):
        lo, hi = nl.clarke_interval(None, float(kink))
        scale = _kink_gap(kinks, k)
        for seq in range(st.sequences):
            mode = modes[seq % len(modes)]
            c = scale * st.rate_c * float(gen.uniform(0.25, 1.0))
            e0 = scale * st.eps0 * float(gen.uniform(0.25, 1.0))
            n_idx = np.arange(1, st.length + 1)
            if mode == "above":
                yn = kink + c / n_idx
            elif mode == "below":
                yn = kink - c / n_idx
            else:
                yn = kink + ((-1.0) ** n_idx) * c / n_idx
            eps_n = e0 / n_idx
            derivs = np.array([
                mollified_deriv_y(nl, Mollifier(e), None, y)
                for y, e in zip(yn, eps_n)
            ])
            run_limsup = np.maximum.accumulate(derivs[::-1])[::-1]
            run_liminf = np.minimum.accumulate(derivs[::-1])[::-1]
            tail = derivs[st.length // 2:]
            bracket_ok = (float(np.max(tail)) <= hi + st.tol
                          and float(np.min(tail)) >= lo - st.tol)
            for i, n in enumerate(n_idx):
                rows.append([float(kink), seq, mode, int(n), float(yn[i]),
                             float(eps_n[i]), float(derivs[i]),
                             float(run_limsup[i]), float(run_liminf[i]),
                             int(lo - st.tol <= derivs[i] <= hi + st.tol),
                             int(bracket_ok)])

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mollifier_study.csv"
    header = ["kink", "seq", "mode", "n", "y_n", "eps_n", "deriv",
              "running_limsup", "running_liminf", "in_interval", "bracket_ok"]
    meta = {"config_hash": cfg.config_hash, "seed": seed, "grid": grid_label}
    _write_csv(path, header, rows, meta)
    return path


def run_checks(problem, path_result, check_cfg, seed=0, eps_min=None):
    """All four stationarity checks plus constraint qualifications on a
    path-following triple; returns the assembled report."""
    report = StationarityReport()
    snap_tol = check_cfg.snap_tol
    if snap_tol is None:
        snap_tol = max(check_cfg.kink_tol, 2.0 * (eps_min or 0.0))
    report.snap_tol = snap_tol

    u, y = path_result.u, path_result.y
    zeta, p = path_result.zeta, path_result.p
    check_weak(problem, u, y, zeta, p, check_cfg.tol_weak, report)
    check_C(problem, u, y, zeta, check_cfg.tol_C, report, snap_tol=snap_tol)
    check_strong(problem, u, y, zeta, p, check_cfg.tol_strong, report,
                 snap_tol=snap_tol)
    check_cq(problem, u, y, check_cfg.tol_act, check_cfg.kink_tol, report)
    if "B" in check_cfg.conditions:
        directions = sample_contingent_directions(
            u, problem.bounds, check_cfg.directions, seed, p=p,
            alpha=problem.alpha, tol_act=check_cfg.tol_act)
        check_B(problem, u, y, directions, check_cfg.tol_B, report)
    assemble_verdicts(report, problem.bounds is not None)
    return report


def run_pipeline(problem, cfg, out_dir):
    """path_follow -> stationarity report -> artifacts on disk.

    Writes the control/state/coefficient/adjoint/multiplier fields as CSV,
    the per-iteration objective history, and the report JSON; returns
    (report, exit_code, PathFollowResult)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    opt = cfg.optimize
    result = path_follow(problem, opt.smoothing, opt.eps_schedule,
                         problem.grid.zeros(), stop_tol=opt.stop_tol,
                         step_rule=opt.step_rule, max_iters=opt.max_iters,
                         mollifier_panels=opt.mollifier_panels)
    report = run_checks(problem, result, cfg.check, seed=cfg.seed,
                        eps_min=opt.eps_schedule[-1])

    for name, fld in (("u", result.u), ("y", result.y), ("zeta", result.zeta),
                      ("p", result.p), ("mu_a", result.mu_a), ("mu_b", result.mu_b)):
        if fld is not None:
            write_field_csv(fld, out / f"{name}.csv")
    _write_csv(out / "history.csv", ["eps", "iter", "J", "natural_residual"],
               [[e, i, J, nr] for (e, i, J, nr) in result.objective_history],
               _meta(problem, cfg))
    (out / "report.json").write_text(report.to_json() + "\n")
    return report, exit_code(report, cfg.check.conditions), result
