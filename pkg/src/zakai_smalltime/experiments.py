"""Validation harness: error estimation, rate fitting and report emission.

The estimand per horizon T and probe x is the Lq norm (under the reference
measure, where the observation offset is Brownian) of

    u(T, x) - exp(y^2 / (2T)) v(T, x, y)  evaluated at  y = Y_T - y0.

For each observation path, ``u(T, .)`` comes either from the splitting
solver (deterministic given the path; default) or from an inner Feynman-Kac
Monte Carlo run, while the weighted-v side reads one cached deterministic
PDE solve per horizon.  The per-T supremum over probe points is compared
with ``C * T`` plus an explicit numerical budget (3x the outer Monte Carlo
standard error plus 2x a Richardson estimate of the discretization error).
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import linregress

from . import bounds, fk, kolmogorov_pde as kpde, model as model_mod, paths

Array = np.ndarray

# stream-id namespaces hanging off the master seed
_S_OBS = 1
_S_FK = 3
_S_IDENT_OBS = 4
_S_IDENT_XI = 5
_S_RICH_FK = 6

_U_SOLVERS = ("zakai-splitting", "fk-mc")


class ExperimentError(RuntimeError):
    """A per-horizon estimate failed; carries the partial report if any."""

    def __init__(self, message, partial_report=None):
        super().__init__(message)
        self.partial_report = partial_report


@dataclass
class ExperimentConfig:
    """Configuration of a convergence study (also the config-file schema).

    The JSON config file holds exactly these keys; unknown keys are
    rejected.  ``probes`` defaults to ``n_probes`` equispaced points in
    [-K, K]; ``pde_n_t`` defaults to ``obs_n_steps`` so that degenerate
    models cancel exactly between the two solvers;
    ``constants_box_radius`` defaults to 3K.
    """

    model: str = "ou-tanh"
    model_overrides: dict = field(default_factory=dict)
    T_list: list = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    q: float = 1.0
    q1: float | None = None
    q2: float | None = None
    K: float = 1.0
    probes: list | None = None
    n_probes: int = 17
    n_obs_paths: int = 2000
    obs_n_steps: int = 128
    u_solver: str = "zakai-splitting"
    fk_n_paths: int = 20000
    n_x: int = 400
    x_span: float = 6.0
    n_y: int = 640
    y_span_factor: float = 6.0
    pde_n_t: int | None = None
    constants_box_radius: float | None = None
    constants_n_samples: int = 4096
    richardson_paths: int = 3
    identity_bins: int = 25
    identity_samples: int = 100000
    seed: int = 1234
    out_dir: str = "out"
    emit_svg: bool = False

    def __post_init__(self):
        if not self.T_list:
            raise ValueError("T_list must not be empty")
        for T in self.T_list:
            if not (0.0 < T < 1.0):
                raise ValueError(f"every horizon must lie in (0, 1), got {T}")
        if self.u_solver not in _U_SOLVERS:
            raise ValueError(f"u_solver must be one of {_U_SOLVERS}, got {self.u_solver!r}")
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if (self.q1 is None) != (self.q2 is None):
            raise ValueError("give both q1 and q2 or neither")
        if self.probes is not None:
            for x in self.probes:
                if abs(x) > self.K + 1e-12:
                    raise ValueError(f"probe {x} outside the ball of radius {self.K}")
        if self.identity_bins < 20:
            raise ValueError(f"need at least 20 bins, got {self.identity_bins}")

    def holder_split(self) -> tuple[float, float]:
        if self.q1 is None:
            return bounds.symmetric_split(self.q)
        return float(self.q1), float(self.q2)

    def probe_points(self) -> Array:
        if self.probes is not None:
            return np.asarray(self.probes, float)
        return np.linspace(-self.K, self.K, self.n_probes)

    def box_radius(self) -> float:
        return self.constants_box_radius if self.constants_box_radius else 3.0 * self.K


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**data)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


@dataclass
class ErrorRecord:
    """One (T, x) error estimate with its bound and solver diagnostics."""

    model: str
    T: float
    x: float
    q: float
    lq_error: float
    mc_std_error: float
    n_obs_paths: int
    bound: float
    solver: str
    seed: int
    diagnostics: dict = field(default_factory=dict)


@dataclass
class PerTSummary:
    T: float
    sup_error: float
    sup_std_error: float
    budget: float
    bound: float
    passed: bool


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    constants: model_mod.ModelConstants
    constant_value_per_T: dict
    records: list
    per_T: list
    slope: float
    intercept: float
    slope_stderr: float
    slope_ci: list
    runtime_seconds: float


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _prepare(cfg: ExperimentConfig):
    mdl = model_mod.get_model(cfg.model, **cfg.model_overrides)
    coeffs = model_mod.derive_coefficients(mdl)
    constants = model_mod.estimate_constants(
        mdl, coeffs, cfg.box_radius(), cfg.constants_n_samples, seed=cfg.seed)
    return mdl, coeffs, constants


def _bound_for(cfg: ExperimentConfig, constants, T: float) -> float:
    q1, q2 = cfg.holder_split()
    p = bounds.TheoremParams(q=cfg.q, q1=q1, q2=q2, T=T, K=cfg.K, constants=constants)
    return bounds.constant_C(p) * T


def _x_grid(cfg: ExperimentConfig) -> kpde.Grid1D:
    return kpde.Grid1D(-cfg.x_span, cfg.x_span, cfg.n_x)


def _v_solve(cfg: ExperimentConfig, mdl, coeffs, T: float, widen: int = 0,
             scale: int = 1) -> kpde.PDESolution:
    """One deterministic v-solve; ``widen`` doubles the y-span (and n_y to
    keep dy), ``scale`` < 1 is used for Richardson coarsening."""
    span = cfg.y_span_factor * math.sqrt(T) * (2**widen)
    n_y = max(8, (cfg.n_y * (2**widen)) // scale)
    n_x = max(8, cfg.n_x // scale)
    n_t = max(4, (cfg.pde_n_t or cfg.obs_n_steps) // scale)
    grid = kpde.Grid2D(-cfg.x_span, cfg.x_span, n_x, -span, span, n_y)
    return kpde.solve(grid, T, n_t, mdl, coeffs)


def _probe_values(x_nodes: Array, columns: Array, probes: Array) -> Array:
    """Cubic-spline read-out of per-path grid columns at the probe points."""
    return CubicSpline(x_nodes, columns, axis=0)(probes)


def _u_values_zakai(cfg, mdl, coeffs, T, increments, probes,
                    diagnostics: dict | None = None) -> Array:
    grid1d = _x_grid(cfg)
    cols = kpde.zakai_splitting_solve_batch(grid1d, increments, T, mdl, coeffs,
                                            diagnostics=diagnostics)
    return _probe_values(grid1d.nodes, cols, probes)


def _u_values_fk(cfg, mdl, coeffs, T, increments, probes, t_idx,
                 n_steps=None) -> tuple[Array, Array]:
    n_steps = n_steps or cfg.obs_n_steps
    grid = paths.TimeGrid(T, n_steps)
    n_paths = increments.shape[0]
    vals = np.empty((len(probes), n_paths))
    ses = np.empty_like(vals)
    for pi, xp in enumerate(probes):
        for pj in range(n_paths):
            obs = paths.ObservationPath.from_increments(grid, increments[pj])
            rng = paths.stream(cfg.seed, (_S_FK, t_idx, pi, pj))
            est = fk.fk_u(np.array([xp]), obs, mdl, coeffs, grid, cfg.fk_n_paths, rng)
            vals[pi, pj] = est.value
            ses[pi, pj] = est.std_error
    return vals, ses


def _approx_values(cfg, mdl, coeffs, T, probes, y_terminal, cache: dict,
                   scale: int = 1) -> tuple[Array, kpde.PDESolution]:
    """Weighted-v read-out for all probes at the observed terminal offsets.

    Re-solves once with a doubled y-span if any terminal value falls outside
    the safe interpolation range, then fails hard.
    """
    for widen in (cache.get("widen", 0), cache.get("widen", 0) + 1):
        key = (T, widen, scale)
        if key not in cache:
            cache[key] = _v_solve(cfg, mdl, coeffs, T, widen=widen, scale=scale)
        sol = cache[key]
        try:
            xs = np.repeat(probes, len(y_terminal))
            ys = np.tile(y_terminal, len(probes))
            vals = kpde.evaluate_approximation(sol, xs, ys)
            cache["widen"] = widen
            return vals.reshape(len(probes), len(y_terminal)), sol
        except kpde.OutOfDomainError:
            if widen > cache.get("widen", 0):
                raise
    raise AssertionError("unreachable")


def _delta_method_lq(diffs: Array, q: float) -> tuple[float, float]:
    """(mean |diff|^q)^(1/q) and its delta-method standard error."""
    n = diffs.shape[-1]
    powered = np.abs(diffs) ** q
    m = float(np.add.reduce(powered, axis=-1) / n)
    if n > 1:
        se_m = float(np.sqrt(np.add.reduce((powered - m) ** 2, axis=-1) / (n - 1) / n))
    else:
        se_m = 0.0
    if m <= 0.0:
        return 0.0, se_m
    value = m ** (1.0 / q)
    return value, (1.0 / q) * m ** (1.0 / q - 1.0) * se_m


def _richardson_budget(cfg, mdl, coeffs, T, t_idx, increments, probes,
                       cache: dict) -> float:
    """2x Richardson estimate of the discretization error on a few paths."""
    r = min(cfg.richardson_paths, increments.shape[0])
    if r == 0 or cfg.obs_n_steps % 2 != 0:
        return 0.0
    inc_fine = increments[:r]
    inc_coarse = paths.coarsen_increments(inc_fine.T).T  # pairwise over steps
    y_term = np.cumsum(inc_fine, axis=1)[:, -1]

    if cfg.u_solver == "zakai-splitting":
        u_fine = _u_values_zakai(cfg, mdl, coeffs, T, inc_fine, probes)
        u_coarse = _u_values_zakai(cfg, mdl, coeffs, T, inc_coarse, probes)
        u_err = float(np.abs(u_fine - u_coarse).max())
    else:
        grid_f = paths.TimeGrid(T, cfg.obs_n_steps)
        grid_c = paths.TimeGrid(T, cfg.obs_n_steps // 2)
        u_err = 0.0
        for pj in range(r):
            obs_f = paths.ObservationPath.from_increments(grid_f, inc_fine[pj])
            obs_c = paths.ObservationPath.from_increments(grid_c, inc_coarse[pj])
            xp = np.array([probes[len(probes) // 2]])
            ef = fk.fk_u(xp, obs_f, mdl, coeffs, grid_f, cfg.fk_n_paths,
                         paths.stream(cfg.seed, (_S_RICH_FK, t_idx, pj, 0)))
            ec = fk.fk_u(xp, obs_c, mdl, coeffs, grid_c, cfg.fk_n_paths,
                         paths.stream(cfg.seed, (_S_RICH_FK, t_idx, pj, 1)))
            u_err = max(u_err, abs(ef.value - ec.value) + ef.std_error + ec.std_error)

    approx_fine, _ = _approx_values(cfg, mdl, coeffs, T, probes, y_term, cache)
    approx_coarse, _ = _approx_values(cfg, mdl, coeffs, T, probes, y_term, cache,
                                      scale=2)
    v_err = float(np.abs(approx_fine - approx_coarse).max())
    return 2.0 * (u_err + v_err)


# ---------------------------------------------------------------------------
# harness operations
# ---------------------------------------------------------------------------

def _records_for_T(cfg, mdl, coeffs, constants, T, t_idx, probes,
                   cache: dict) -> tuple[list, PerTSummary]:
    grid = paths.TimeGrid(T, cfg.obs_n_steps)
    rng = paths.stream(cfg.seed, (_S_OBS, t_idx))
    increments = paths.sample_observation_p1_batch(grid, cfg.n_obs_paths, rng)
    y_term = np.cumsum(increments, axis=1)[:, -1]

    inner_se = None
    u_diag: dict = {}
    if cfg.u_solver == "zakai-splitting":
        u_vals = _u_values_zakai(cfg, mdl, coeffs, T, increments, probes,
                                 diagnostics=u_diag)
    else:
        u_vals, inner_se = _u_values_fk(cfg, mdl, coeffs, T, increments, probes, t_idx)

    approx_vals, sol = _approx_values(cfg, mdl, coeffs, T, probes, y_term, cache)
    bound = _bound_for(cfg, constants, T)
    budget = _richardson_budget(cfg, mdl, coeffs, T, t_idx, increments, probes, cache)
    if inner_se is not None:
        budget += float(inner_se.mean())

    records = []
    for pi, xp in enumerate(probes):
        lq, se = _delta_method_lq(u_vals[pi] - approx_vals[pi], cfg.q)
        diag = {
            "pde_min_value": float(sol.diagnostics.get("min_value", 0.0)),
            "pde_boundary_final_max": float(sol.diagnostics.get("boundary_final_max", 0.0)),
            "u_min_value": float(u_vals[pi].min()),
            "u_cn_fallbacks": float(u_diag.get("cn_fallbacks", 0)),
        }
        records.append(ErrorRecord(
            model=cfg.model, T=float(T), x=float(xp), q=float(cfg.q),
            lq_error=lq, mc_std_error=se, n_obs_paths=cfg.n_obs_paths,
            bound=bound, solver=cfg.u_solver, seed=cfg.seed, diagnostics=diag))

    sup_idx = int(np.argmax([r.lq_error for r in records]))
    sup = records[sup_idx].lq_error
    sup_se = records[sup_idx].mc_std_error
    summary = PerTSummary(T=float(T), sup_error=sup, sup_std_error=sup_se,
                          budget=budget, bound=bound,
                          passed=bool(sup <= bound + 3.0 * sup_se + budget))
    return records, summary


def lq_error_at(x: float, T: float, cfg: ExperimentConfig) -> ErrorRecord:
    """Lq error estimate at one probe point and one horizon."""
    mdl, coeffs, constants = _prepare(cfg)
    t_idx = cfg.T_list.index(T) if T in cfg.T_list else 0
    records, _ = _records_for_T(cfg, mdl, coeffs, constants, T, t_idx,
                                np.asarray([x], float), cache={})
    return records[0]


def sup_error_ball(T: float, cfg: ExperimentConfig) -> tuple[list, PerTSummary]:
    """All probe records and the per-T supremum summary."""
    mdl, coeffs, constants = _prepare(cfg)
    t_idx = cfg.T_list.index(T) if T in cfg.T_list else 0
    return _records_for_T(cfg, mdl, coeffs, constants, T, t_idx,
                          cfg.probe_points(), cache={})


def fit_loglog_slope(T_values, errors) -> tuple[float, float, float]:
    """OLS slope/intercept/stderr of log(error) against log(T)."""
    T_values = np.asarray(T_values, float)
    errors = np.asarray(errors, float)
    if np.any(errors <= 0):
        raise ValueError("nonpositive errors cannot be fitted on a log scale")
    res = linregress(np.log(T_values), np.log(errors))
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return float(res.slope), float(res.intercept), stderr


def convergence_study(cfg: ExperimentConfig) -> ConvergenceReport:
    """Full study: per-T sup errors, rate fit and bound-satisfaction flags."""
    if len(cfg.T_list) < 3:
        raise ValueError("need at least 3 horizons for a rate fit")
    started = time.perf_counter()
    mdl, coeffs, constants = _prepare(cfg)
    probes = cfg.probe_points()

    records: list = []
    summaries: list = []
    c_per_T: dict = {}
    for t_idx, T in enumerate(cfg.T_list):
        try:
            cache: dict = {}
            recs, summary = _records_for_T(cfg, mdl, coeffs, constants, T, t_idx,
                                           probes, cache)
        except Exception as exc:
            partial = _assemble_report(cfg, constants, c_per_T, records, summaries,
                                       slope=float("nan"), intercept=float("nan"),
                                       stderr=0.0, started=started)
            raise ExperimentError(f"horizon T={T} failed: {exc}", partial) from exc
        records.extend(recs)
        summaries.append(summary)
        c_per_T[str(T)] = summary.bound / T

    slope, intercept, stderr = fit_loglog_slope(
        [s.T for s in summaries], [s.sup_error for s in summaries])
    return _assemble_report(cfg, constants, c_per_T, records, summaries,
                            slope, intercept, stderr, started)


def _assemble_report(cfg, constants, c_per_T, records, summaries, slope,
                     intercept, stderr, started) -> ConvergenceReport:
    ci = [slope - 1.96 * stderr, slope + 1.96 * stderr]
    return ConvergenceReport(
        config=cfg, constants=constants, constant_value_per_T=c_per_T,
        records=records, per_T=summaries, slope=slope, intercept=intercept,
        slope_stderr=stderr, slope_ci=ci,
        runtime_seconds=time.perf_counter() - started)


# ---------------------------------------------------------------------------
# conditional-expectation identity check
# ---------------------------------------------------------------------------

@dataclass
class IdentityBin:
    y_mean: float
    count: int
    u_mean: float
    rhs_mean: float
    std_error: float
    z: float
    undersampled: bool


@dataclass
class IdentityReport:
    x: float
    T: float
    n_samples: int
    bins: list
    max_abs_z: float


def remark_identity_test(x: float, T: float, cfg: ExperimentConfig) -> IdentityReport:
    """Binned check that conditioning u(T, x) on the terminal observation
    offset reproduces the weighted PDE solution.

    Each sample pairs one observation path with a single auxiliary path, so
    bin-conditional means of the per-sample functional are unbiased for the
    conditional expectation; they are compared against the bin mean of the
    weighted-v read-out at the sampled offsets.
    """
    mdl, coeffs, _ = _prepare(cfg)
    grid = paths.TimeGrid(T, cfg.obs_n_steps)
    n = cfg.identity_samples

    inc = paths.sample_observation_p1_batch(
        grid, n, paths.stream(cfg.seed, (_S_IDENT_OBS,)))
    y_term = np.cumsum(inc, axis=1)[:, -1]
    p = fk._path_functionals(np.asarray([x], float), mdl, coeffs, grid, n,
                             paths.stream(cfg.seed, (_S_IDENT_XI,)), dY=inc)
    u_samples = p["u0_T"] * np.exp(p["c_int"] + p["ito_f"] - 0.5 * p["h2_int"])

    cache: dict = {}
    rhs_rows, _ = _approx_values(cfg, mdl, coeffs, T, np.asarray([x], float),
                                 y_term, cache)
    rhs_samples = rhs_rows[0]

    edges = np.quantile(y_term, np.linspace(0.0, 1.0, cfg.identity_bins + 1))
    which = np.clip(np.searchsorted(edges, y_term, side="right") - 1,
                    0, cfg.identity_bins - 1)
    bins = []
    max_abs_z = 0.0
    for b in range(cfg.identity_bins):
        mask = which == b
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        du = u_samples[mask] - rhs_samples[mask]
        mu = float(du.mean())
        se = float(du.std(ddof=1) / math.sqrt(cnt)) if cnt > 1 else float("inf")
        z = mu / se if se > 0 else 0.0
        undersampled = cnt < 50
        if not undersampled:
            max_abs_z = max(max_abs_z, abs(z))
        bins.append(IdentityBin(
            y_mean=float(y_term[mask].mean()), count=cnt,
            u_mean=float(u_samples[mask].mean()),
            rhs_mean=float(rhs_samples[mask].mean()),
            std_error=se, z=float(z), undersampled=undersampled))
    return IdentityReport(x=float(x), T=float(T), n_samples=n, bins=bins,
                          max_abs_z=float(max_abs_z))


# ---------------------------------------------------------------------------
# linear-Gaussian validation references
# ---------------------------------------------------------------------------

def kalman_bucy_reference(rate: float, sigma: float, gain: float, m0: float,
                          P0: float, obs: paths.ObservationPath) -> tuple[float, float]:
    """Continuous-time linear filter stepped on the observation grid.

    Signal ``dX = -rate X dt + sigma dB``, observation drift ``gain * X``:
    ``dm = -rate m dt + P gain (dY - gain m dt)`` and
    ``dP = (-2 rate P + sigma^2 - gain^2 P^2) dt``.
    """
    dt = obs.grid.dt
    m, P = float(m0), float(P0)
    for k in range(obs.grid.n_steps):
        innov = obs.increments[k] - gain * m * dt
        m_new = m - rate * m * dt + P * gain * innov
        P_new = P + (-2.0 * rate * P + sigma**2 - gain**2 * P**2) * dt
        m, P = m_new, P_new
    return m, P


def posterior_moments(sol: kpde.ZakaiSolution) -> tuple[float, float]:
    """Mean and variance of the normalized density on the solver grid."""
    x = sol.grid.nodes
    u = sol.values
    mass = np.trapezoid(u, x)
    if mass <= 0:
        raise ValueError("density has nonpositive mass")
    mean = np.trapezoid(x * u, x) / mass
    var = np.trapezoid(x**2 * u, x) / mass - mean**2
    return float(mean), float(var)


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def report_to_dict(report: ConvergenceReport) -> dict:
    return dataclasses.asdict(report)


def report_from_dict(data: dict) -> ConvergenceReport:
    cfg = config_from_dict(data["config"])
    constants = model_mod.ModelConstants(**data["constants"])
    records = [ErrorRecord(**r) for r in data["records"]]
    per_T = [PerTSummary(**s) for s in data["per_T"]]
    return ConvergenceReport(
        config=cfg, constants=constants,
        constant_value_per_T=data["constant_value_per_T"],
        records=records, per_T=per_T, slope=data["slope"],
        intercept=data["intercept"], slope_stderr=data["slope_stderr"],
        slope_ci=list(data["slope_ci"]),
        runtime_seconds=data["runtime_seconds"])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_reports(report: ConvergenceReport, out_dir) -> dict:
    """Write records.csv, report.json and plot data; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    records_path = out / "records.csv"
    with open(records_path, "w") as fh:
        fh.write("model,T,x,q,lq_error,se,bound,solver,seed\n")
        for r in report.records:
            fh.write(",".join([
                r.model, _fmt(r.T), _fmt(r.x), _fmt(r.q), _fmt(r.lq_error),
                _fmt(r.mc_std_error), _fmt(r.bound), r.solver, str(r.seed)]) + "\n")

    report_path = out / "report.json"
    with open(report_path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")

    plot_path = out / "plot_data.csv"
    with open(plot_path, "w") as fh:
        fh.write("T,sup_error,fitted,bound\n")
        for s in report.per_T:
            fitted = (math.exp(report.intercept) * s.T**report.slope
                      if math.isfinite(report.slope) else float("nan"))
            fh.write(",".join([_fmt(s.T), _fmt(s.sup_error), _fmt(fitted),
                               _fmt(s.bound)]) + "\n")

    outputs = {"records": records_path, "report": report_path, "plot_data": plot_path}
    if report.config.emit_svg:
        outputs["svg"] = _emit_svg(report, out / "convergence.svg")
    return outputs


def _emit_svg(report: ConvergenceReport, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    Ts = np.array([s.T for s in report.per_T])
    errs = np.array([s.sup_error for s in report.per_T])
    bound = np.array([s.bound for s in report.per_T])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(Ts, errs, "ko", label="sup error")
    if math.isfinite(report.slope):
        ax.loglog(Ts, np.exp(report.intercept) * Ts**report.slope, "k--",
                  label=f"fit slope {report.slope:.2f}")
    ax.loglog(Ts, bound, "r-", label="C * T")
    ax.set_xlabel("T")
    ax.set_ylabel("error")
    ax.legend()
    fig.savefig(path, bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path
