"""TOML configuration ingestion.

Unknown keys are rejected by name; invariant violations are reported with
their field path.  A commented example schema ships in the repository
(config/example.toml).
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .grid import Grid, GridFunction, read_csv
from .network import load_network
from .nonlinearity import Nonlinearity, check_monotone
from .optimize import StepRule, geometric_schedule
from .statesolve import ControlProblem, SolverSettings
from .stationarity import DEFAULT_TOLERANCES


@dataclass
class OptimizeSettings:
    smoothing: str = "mollified"
    eps_schedule: list = field(default_factory=lambda: geometric_schedule(1e-1, 1e-4, 6))
    stop_tol: float = 1e-7
    max_iters: int = 2000
    mollifier_panels: int = 64
    step_rule: StepRule = field(default_factory=StepRule)


@dataclass
class CheckSettings:
    conditions: tuple = ("B", "weak", "C", "strong")
    directions: int = 20
    tol_B: float = DEFAULT_TOLERANCES["tol_B"]
    tol_weak: float = DEFAULT_TOLERANCES["tol_weak"]
    tol_C: float = DEFAULT_TOLERANCES["tol_C"]
    tol_strong: float = DEFAULT_TOLERANCES["tol_strong"]
    tol_act: float = DEFAULT_TOLERANCES["tol_act"]
    kink_tol: float = DEFAULT_TOLERANCES["kink_tol"]
    snap_tol: Optional[float] = None  # default: max(kink_tol, 2 * final eps)


@dataclass
class ApproxStudySettings:
    target: Nonlinearity = None
    window: tuple = (-2.0, 2.0)
    spacings: tuple = (0.5, 0.25, 0.125, 0.0625)
    control: dict = field(default_factory=lambda: {"preset": "eigenmode", "scale": 1.0})
    run_optimizer: bool = True
    eps: float = 1e-3
    stop_tol: float = 1e-7
    dense_points: int = 10000
    holder_exponent: float = 0.5


@dataclass
class MollifierStudySettings:
    sequences: int = 20
    length: int = 30
    rate_c: float = 0.2
    eps0: float = 0.25
    tol: float = 1e-8


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "out"
    verbose: bool = False
    optimize: OptimizeSettings = field(default_factory=OptimizeSettings)
    check: CheckSettings = field(default_factory=CheckSettings)
    solve_control: dict = field(default_factory=lambda: {"preset": "zero"})
    approx: Optional[ApproxStudySettings] = None
    mollifier: Optional[MollifierStudySettings] = None
    config_hash: str = ""
    base_dir: Path = Path(".")


_PRESETS = ("zero", "eigenmode", "bump", "tilted-plane")


def field_preset(grid, preset, scale=1.0):
    """Named analytic fields sampled on the grid (reproducible experiment
    inputs without external data)."""
    x = grid.coordinates()
    t = np.stack([(x[:, i] - a) / (b - a) for i, (a, b) in enumerate(grid.extents)],
                 axis=1)
    if preset == "zero":
        vals = np.zeros(grid.size)
    elif preset == "eigenmode":
        vals = np.prod(np.sin(np.pi * t), axis=1)
    elif preset == "bump":
        vals = np.prod(4.0 * t * (1.0 - t), axis=1)
    elif preset == "tilted-plane":
        vals = 2.0 * t[:, 0] - 1.0
    else:
        raise ConfigError(f"unknown field preset {preset!r}; known: {', '.join(_PRESETS)}")
    return GridFunction(grid, scale * vals)


def _require_keys(table, allowed, path):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{path}: unknown key {key!r} "
                              f"(allowed: {', '.join(sorted(allowed))})")


def _load_field(grid, spec, path, base_dir):
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected a table with preset/csv")
    _require_keys(spec, {"preset", "scale", "csv"}, path)
    if "csv" in spec:
        return read_csv(grid, base_dir / spec["csv"])
    preset = spec.get("preset", "zero")
    return field_preset(grid, preset, float(spec.get("scale", 1.0)))


def _load_bound(grid, value, path, base_dir):
    if isinstance(value, str):
        return read_csv(grid, base_dir / value)
    try:
        return GridFunction(grid, np.full(grid.size, float(value)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: expected a number or csv path") from exc


def _build_grid(table):
    _require_keys(table, {"n", "extent"}, "problem.grid")
    if "n" not in table:
        raise ConfigError("problem.grid: missing key 'n'")
    n = table["n"]
    if isinstance(n, int):
        n = [n]
    extent = table.get("extent")
    try:
        return Grid(tuple(n), extent)
    except ValueError as exc:
        raise ConfigError(f"problem.grid: {exc}") from exc


def _build_nonlinearity(table, grid, base_dir, path="problem.nonlinearity"):
    _require_keys(table, {"kind", "name", "path", "knots", "values", "end_slopes",
                          "t0", "t1", "s0", "s1", "s2", "certify"}, path)
    kind = table.get("kind", "builtin")
    if kind == "builtin":
        if "name" not in table:
            raise ConfigError(f"{path}: builtin needs a 'name'")
        params = {k: table[k] for k in ("t0", "t1", "s0", "s1", "s2") if k in table}
        try:
            nl = Nonlinearity.builtin(table["name"], **params)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    elif kind == "network":
        if "path" not in table:
            raise ConfigError(f"{path}: network needs a 'path'")
        net = load_network(base_dir / table["path"])
        if net.spatial_dim != grid.dim:
            raise ConfigError(
                f"{path}: network input_dim {net.input_dim} incompatible with "
                f"{grid.dim}-d grid (need {grid.dim + 1})")
        nl = Nonlinearity.from_network(net)
    elif kind == "knot_table":
        for k in ("knots", "values", "end_slopes"):
            if k not in table:
                raise ConfigError(f"{path}: knot_table needs '{k}'")
        try:
            nl = Nonlinearity.from_knot_table(table["knots"], table["values"],
                                              table["end_slopes"])
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    else:
        raise ConfigError(f"{path}.kind: unknown kind {kind!r}")

    certify = table.get("certify")
    if certify is not None:
        _require_keys(certify, {"y_halfwidth", "y_samples", "x_samples", "tol_mono"},
                      f"{path}.certify")
        x_samples = None
        if nl.kind == "network":
            take = max(1, grid.size // int(certify.get("x_samples", 16)))
            x_samples = grid.coordinates()[::take]
        check_monotone(nl, x_samples=x_samples,
                       y_halfwidth=float(certify.get("y_halfwidth", 10.0)),
                       y_samples=int(certify.get("y_samples", 257)),
                       tol_mono=float(certify.get("tol_mono", 1e-12)))
    return nl


def _build_solver(table):
    _require_keys(table, {"newton_tol", "newton_max", "cg_tol", "cg_max",
                          "truncation_level"}, "problem.solver")
    kwargs = {k: table[k] for k in table}
    try:
        return SolverSettings(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"problem.solver: {exc}") from exc


def _build_step_rule(table):
    _require_keys(table, {"initial", "backtrack", "sufficient_decrease", "grow",
                          "max_step"}, "optimize.step_rule")
    return StepRule(**{k: float(v) for k, v in table.items()})


def _build_optimize(table):
    _require_keys(table, {"smoothing", "eps_max", "eps_min", "eps_levels",
                          "eps_schedule", "stop_tol", "max_iters",
                          "mollifier_panels", "step_rule"}, "optimize")
    opt = OptimizeSettings()
    if "smoothing" in table:
        if table["smoothing"] not in ("mollified", "canonical"):
            raise ConfigError(f"optimize.smoothing: unknown family {table['smoothing']!r}")
        opt.smoothing = table["smoothing"]
    if "eps_schedule" in table:
        sched = [float(e) for e in table["eps_schedule"]]
        if any(b >= a for a, b in zip(sched, sched[1:])) or any(e <= 0 for e in sched):
            raise ConfigError("optimize.eps_schedule: must be strictly decreasing and positive")
        opt.eps_schedule = sched
    elif {"eps_max", "eps_min", "eps_levels"} & set(table):
        try:
            opt.eps_schedule = geometric_schedule(float(table.get("eps_max", 1e-1)),
                                                  float(table.get("eps_min", 1e-4)),
                                                  int(table.get("eps_levels", 6)))
        except ValueError as exc:
            raise ConfigError(f"optimize: {exc}") from exc
    opt.stop_tol = float(table.get("stop_tol", opt.stop_tol))
    opt.max_iters = int(table.get("max_iters", opt.max_iters))
    opt.mollifier_panels = int(table.get("mollifier_panels", opt.mollifier_panels))
    if "step_rule" in table:
        opt.step_rule = _build_step_rule(table["step_rule"])
    return opt


def _build_check(table):
    allowed = {"conditions", "directions", "tol_B", "tol_weak", "tol_C",
               "tol_strong", "tol_act", "kink_tol", "snap_tol"}
    _require_keys(table, allowed, "check")
    chk = CheckSettings()
    if "conditions" in table:
        known = {"B", "weak", "C", "strong"}
        conds = tuple(table["conditions"])
        for c in conds:
            if c not in known:
                raise ConfigError(f"check.conditions: unknown condition {c!r}")
        chk.conditions = conds
    chk.directions = int(table.get("directions", chk.directions))
    for k in ("tol_B", "tol_weak", "tol_C", "tol_strong", "tol_act", "kink_tol"):
        setattr(chk, k, float(table.get(k, getattr(chk, k))))
    if "snap_tol" in table:
        chk.snap_tol = float(table["snap_tol"])
    return chk


def _build_approx(table, grid, base_dir):
    allowed = {"target", "window", "spacings", "control", "optimize", "eps",
               "stop_tol", "dense_points", "holder_exponent"}
    _require_keys(table, allowed, "approx_study")
    st = ApproxStudySettings()
    if "target" not in table:
        raise ConfigError("approx_study: missing 'target'")
    st.target = _build_nonlinearity(table["target"], grid, base_dir, "approx_study.target")
    if st.target.kind == "network":
        raise ConfigError("approx_study.target: needs known kinks (builtin or knot_table)")
    if "window" in table:
        w = tuple(float(v) for v in table["window"])
        if len(w) != 2 or w[0] >= w[1]:
            raise ConfigError("approx_study.window: need [lo, hi] with lo < hi")
        st.window = w
    if "spacings" in table:
        sp = tuple(float(v) for v in table["spacings"])
        if any(b >= a for a, b in zip(sp, sp[1:])) or any(v <= 0 for v in sp):
            raise ConfigError("approx_study.spacings: must be strictly decreasing and positive")
        st.spacings = sp
    st.control = table.get("control", st.control)
    st.run_optimizer = bool(table.get("optimize", st.run_optimizer))
    st.eps = float(table.get("eps", st.eps))
    st.stop_tol = float(table.get("stop_tol", st.stop_tol))
    st.dense_points = int(table.get("dense_points", st.dense_points))
    st.holder_exponent = float(table.get("holder_exponent", st.holder_exponent))
    return st


def _build_mollifier_study(table):
    allowed = {"sequences", "length", "rate_c", "eps0", "tol"}
    _require_keys(table, allowed, "mollifier_study")
    st = MollifierStudySettings()
    st.sequences = int(table.get("sequences", st.sequences))
    st.length = int(table.get("length", st.length))
    st.rate_c = float(table.get("rate_c", st.rate_c))
    st.eps0 = float(table.get("eps0", st.eps0))
    st.tol = float(table.get("tol", st.tol))
    return st


def parse_config(path):
    """Read and fully validate a TOML problem/experiment file.

    Returns (ControlProblem, ExperimentConfig)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    _require_keys(doc, {"seed", "out_dir", "verbose", "problem", "optimize",
                        "check", "solve", "approx_study", "mollifier_study"}, "top level")
    if "problem" not in doc:
        raise ConfigError("missing [problem] table")
    prob_tbl = doc["problem"]
    _require_keys(prob_tbl, {"grid", "nonlinearity", "alpha", "desired_state",
                             "bounds", "solver"}, "problem")
    if "grid" not in prob_tbl:
        raise ConfigError("problem: missing [problem.grid]")
    base_dir = path.parent
    grid = _build_grid(prob_tbl["grid"])
    if "nonlinearity" not in prob_tbl:
        raise ConfigError("problem: missing [problem.nonlinearity]")
    nl = _build_nonlinearity(prob_tbl["nonlinearity"], grid, base_dir)
    if "alpha" not in prob_tbl:
        raise ConfigError("problem: missing 'alpha'")
    g = _load_field(grid, prob_tbl.get("desired_state", {"preset": "zero"}),
                    "problem.desired_state", base_dir)
    bounds = None
    if "bounds" in prob_tbl:
        btbl = prob_tbl["bounds"]
        _require_keys(btbl, {"lower", "upper"}, "problem.bounds")
        if "lower" not in btbl or "upper" not in btbl:
            raise ConfigError("problem.bounds: need both 'lower' and 'upper'")
        u_a = _load_bound(grid, btbl["lower"], "problem.bounds.lower", base_dir)
        u_b = _load_bound(grid, btbl["upper"], "problem.bounds.upper", base_dir)
        gap = u_b.values - u_a.values
        if np.any(gap <= 0):
            k = int(np.argmin(gap))
            raise ConfigError(f"problem.bounds: u_a >= u_b at node {k}")
        bounds = (u_a, u_b)
    solver = _build_solver(prob_tbl.get("solver", {}))
    try:
        problem = ControlProblem(grid, nl, g, float(prob_tbl["alpha"]),
                                 bounds=bounds, solver=solver)
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from exc

    cfg = ExperimentConfig()
    cfg.seed = int(doc.get("seed", 0))
    cfg.out_dir = str(doc.get("out_dir", "out"))
    cfg.verbose = bool(doc.get("verbose", False))
    cfg.base_dir = base_dir
    cfg.config_hash = hashlib.sha256(raw).hexdigest()[:12]
    if "optimize" in doc:
        cfg.optimize = _build_optimize(doc["optimize"])
    if "check" in doc:
        cfg.check = _build_check(doc["check"])
    if "solve" in doc:
        _require_keys(doc["solve"], {"control"}, "solve")
        cfg.solve_control = doc["solve"].get("control", cfg.solve_control)
    if "approx_study" in doc:
        cfg.approx = _build_approx(doc["approx_study"], grid, base_dir)
    if "mollifier_study" in doc:
        cfg.mollifier = _build_mollifier_study(doc["mollifier_study"])
    return problem, cfg
