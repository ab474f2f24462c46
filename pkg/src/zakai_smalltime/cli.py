"""Command-line interface.

Subcommands: ``run`` (convergence study), ``bounds`` (error-constant
decomposition), ``lemma`` (inequality sweep), ``identity`` (conditional-
expectation check), ``selftest`` (quick oracle suite).
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import bounds, experiments, fk, kolmogorov_pde as kpde, model as model_mod, paths


def _parse_T_list(text: str) -> list:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _base_config(args) -> experiments.ExperimentConfig:
    if getattr(args, "config", None):
        cfg = experiments.load_config(args.config)
    else:
        cfg = experiments.ExperimentConfig()
    updates = {}
    if getattr(args, "model", None):
        updates["model"] = args.model
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None):
        updates["out_dir"] = args.out
    if getattr(args, "T", None):
        updates["T_list"] = _parse_T_list(args.T)
    if getattr(args, "q", None) is not None:
        updates["q"] = args.q
    if getattr(args, "paths", None) is not None:
        updates["n_obs_paths"] = args.paths
    if updates:
        data = experiments.config_to_dict(cfg)
        data.update(updates)
        cfg = experiments.config_from_dict(data)
    return cfg


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    report = experiments.convergence_study(cfg)
    outputs = experiments.emit_reports(report, cfg.out_dir)
    print(f"model={cfg.model} q={cfg.q} solver={cfg.u_solver} seed={cfg.seed}")
    for s in report.per_T:
        status = "ok" if s.passed else "EXCEEDED"
        print(f"  T={s.T:<6g} sup_error={s.sup_error:.6e} "
              f"bound={s.bound:.6e} budget={s.budget:.2e} [{status}]")
    print(f"fitted slope {report.slope:.4f} "
          f"(95% CI [{report.slope_ci[0]:.4f}, {report.slope_ci[1]:.4f}])")
    print("wrote: " + ", ".join(str(p) for p in outputs.values()))
    return 0 if all(s.passed for s in report.per_T) else 1


def _cmd_bounds(args) -> int:
    cfg = _base_config(args)
    mdl = model_mod.get_model(cfg.model, **cfg.model_overrides)
    coeffs = model_mod.derive_coefficients(mdl)
    constants = model_mod.estimate_constants(
        mdl, coeffs, cfg.box_radius(), cfg.constants_n_samples, seed=cfg.seed)
    print(f"model={cfg.model} box_radius={cfg.box_radius()} "
          f"n_samples={cfg.constants_n_samples}")
    for name in ("L", "M", "h_inf", "u0_inf", "c_inf", "mu1", "mu2"):
        print(f"  {name:<7} = {getattr(constants, name):.8g}")
    q1, q2 = cfg.holder_split()
    for T in cfg.T_list:
        p = bounds.TheoremParams(q=cfg.q, q1=q1, q2=q2, T=T, K=cfg.K,
                                 constants=constants)
        terms = bounds.constant_C_terms(p)
        total = bounds.constant_C(p)
        opt = bounds.optimize_holder_split(cfg.q, T, cfg.K, constants)
        print(f"T={T} q={cfg.q} (q1={q1:g}, q2={q2:g}):")
        for k, v in terms.items():
            print(f"    {k:<20} = {v:.8g}")
        print(f"    C = {total:.8g}; C*T = {total * T:.8g}")
        print(f"    minimized over splits: C = {bounds.constant_C(opt):.8g} "
              f"at q1={opt.q1:.4g}, q2={opt.q2:.4g}")
    return 0


def _cmd_lemma(args) -> int:
    cfg = _base_config(args)
    rng = paths.stream(cfg.seed, (90,))
    n_pairs = args.pairs
    worst = 0.0
    violations = 0
    for _ in range(n_pairs):
        m = int(rng.integers(4, 33))
        T = float(rng.uniform(0.05, 1.0))
        f_vals = rng.uniform(-2.0, 2.0, m)
        g_vals = rng.uniform(-2.0, 2.0, m)
        lhs = bounds.lemma_lhs_exact_q2(f_vals, g_vals, T)
        rhs = bounds.lemma_bound(float(np.abs(f_vals).max()), float(np.abs(g_vals).max()),
                                 math.sqrt(bounds.step_l2_products(
                                     f_vals - g_vals, f_vals - g_vals, T)[0]),
                                 T, 4.0, 4.0)
        if rhs > 0:
            worst = max(worst, lhs / rhs)
        if lhs > rhs * (1 + 1e-12):
            violations += 1
    print(f"exact q=2 check over {n_pairs} step-function pairs: "
          f"violations={violations}, worst lhs/bound={worst:.4f}")

    for q in (1.0, 3.0):
        q1, q2 = bounds.symmetric_split(q)
        m, T = 16, 0.5
        f_vals = rng.uniform(-1.5, 1.5, m)
        g_vals = rng.uniform(-1.5, 1.5, m)
        inc = rng.normal(0.0, math.sqrt(T / m), size=(args.paths, m))
        ito_f = inc @ f_vals
        ito_g = inc @ g_vals
        ff, gg, _ = bounds.step_l2_products(f_vals, g_vals, T)
        samples = np.abs(np.exp(ito_f - 0.5 * ff) - np.exp(ito_g - 0.5 * gg)) ** q
        mean = samples.mean()
        se = samples.std(ddof=1) / math.sqrt(len(samples))
        lhs = (mean) ** (1.0 / q)
        lhs_hi = (mean + 3 * se) ** (1.0 / q)
        rhs = bounds.lemma_bound(float(np.abs(f_vals).max()),
                                 float(np.abs(g_vals).max()),
                                 math.sqrt(bounds.step_l2_products(
                                     f_vals - g_vals, f_vals - g_vals, T)[0]),
                                 T, q1, q2)
        ok = lhs_hi <= rhs
        print(f"Monte Carlo q={q}: lhs={lhs:.4f} (+3se {lhs_hi:.4f}) "
              f"bound={rhs:.4f} [{'ok' if ok else 'VIOLATED'}]")
        if not ok:
            violations += 1
    return 0 if violations == 0 else 1


def _cmd_identity(args) -> int:
    cfg = _base_config(args)
    T = cfg.T_list[0] if not args.T else _parse_T_list(args.T)[0]
    report = experiments.remark_identity_test(args.x, T, cfg)
    print(f"model={cfg.model} T={T} x={args.x} samples={report.n_samples} "
          f"bins={len(report.bins)}")
    flagged = [b for b in report.bins if b.undersampled]
    print(f"max |z| over well-sampled bins: {report.max_abs_z:.3f} "
          f"({len(flagged)} undersampled bins)")
    return 0 if report.max_abs_z < 4.0 else 1


def _check(name: str, ok: bool, detail: str, failures: list) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    if not ok:
        failures.append(name)


def _cmd_selftest(args) -> int:
    failures: list = []

    k2 = bounds.kappa(2.0)
    k4 = bounds.kappa(4.0)
    _check("gaussian-norms", abs(k2 - 1.0) < 1e-12 and abs(k4 - 3**0.25) < 1e-12,
           f"kappa(2)={k2:.15f}, kappa(4)={k4:.15f}", failures)

    from scipy import integrate
    T = 0.5
    val, _ = integrate.dblquad(lambda r, s: abs(T - s - r) / T, 0, T, 0, T)
    _check("double-integral", abs(math.sqrt(val) - bounds.double_integral_identity(T)) < 1e-6,
           f"quadrature {math.sqrt(val):.9f} vs closed form "
           f"{bounds.double_integral_identity(T):.9f}", failures)

    lhs = bounds.lemma_lhs_exact_q2(np.ones(8), np.zeros(8), 1.0)
    _check("lemma-closed-form", abs(lhs - math.sqrt(math.e - 1.0)) < 1e-12,
           f"lhs={lhs:.9f}", failures)

    mdl = model_mod.get_model("ou-tanh")
    coeffs = model_mod.derive_coefficients(mdl)
    grid = paths.TimeGrid(0.1, 64)
    obs = paths.sample_observation_p1(grid, paths.stream(7, (1,)))
    est, parts = fk.coupled_difference(np.zeros(1), obs, mdl, coeffs, grid, 4000,
                                       paths.stream(7, (2,)), return_samples=True)
    u_est = fk.fk_u(np.zeros(1), obs, mdl, coeffs, grid, 4000, paths.stream(7, (2,)))
    _check("coupled-engine", abs(np.add.reduce(parts["u"]) / 4000 - u_est.value) < 1e-13,
           f"coupled u-side mean matches fk_u ({u_est.value:.6f})", failures)

    cfg = experiments.ExperimentConfig(
        model="const-h", T_list=[0.1], n_obs_paths=32, obs_n_steps=64,
        n_x=200, n_y=200, n_probes=5, richardson_paths=0, seed=11)
    _, summary = experiments.sup_error_ball(0.1, cfg)
    _check("const-h-degeneration", summary.sup_error < 1e-5,
           f"sup error {summary.sup_error:.3e} (reduced grid)", failures)

    z_grid = kpde.Grid1D(-6.0, 6.0, 200)
    zak = kpde.zakai_splitting_solve(z_grid, obs, mdl, coeffs)
    u_fk = fk.fk_u(np.zeros(1), obs, mdl, coeffs, grid, 20000, paths.stream(7, (3,)))
    u_pde = float(np.interp(0.0, z_grid.nodes, zak.values))
    _check("fk-vs-splitting", abs(u_fk.value - u_pde) < 3 * u_fk.std_error + 5e-3,
           f"fk {u_fk.value:.5f} vs splitting {u_pde:.5f} "
           f"(3se={3 * u_fk.std_error:.2e})", failures)

    print(f"selftest: {6 - len(failures)}/6 passed")
    return 0 if not failures else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zakai-smalltime",
        description="Small-time filtering-density approximation: validation tools")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--model", help="registered model name")
        p.add_argument("--T", help="comma-separated horizon list")
        p.add_argument("--q", type=float, help="error norm order")
        p.add_argument("--paths", type=int, help="observation paths per horizon")

    p_run = sub.add_parser("run", help="convergence study")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_bounds = sub.add_parser("bounds", help="print the error constant factors")
    common(p_bounds)
    p_bounds.set_defaults(func=_cmd_bounds)

    p_lemma = sub.add_parser("lemma", help="inequality sweep")
    common(p_lemma)
    p_lemma.add_argument("--pairs", type=int, default=10000)
    p_lemma.set_defaults(func=_cmd_lemma, paths=100000)

    p_id = sub.add_parser("identity", help="conditional-expectation check")
    common(p_id)
    p_id.add_argument("--x", type=float, default=0.0)
    p_id.set_defaults(func=_cmd_identity)

    p_self = sub.add_parser("selftest", help="quick oracle suite")
    common(p_self)
    p_self.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
