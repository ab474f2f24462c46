import math

import numpy as np
import pytest
from scipy.stats import norm

from zakai_smalltime import fk, kolmogorov_pde as kpde, model, paths
from conftest import make_model_1d

T = 0.1


def _grid(n_x=401, n_y=641, span=6.0):
    return kpde.Grid2D(-span, span, n_x, -6 * math.sqrt(T), 6 * math.sqrt(T), n_y)


def _zero_coeffs():
    def zmat(x):
        return np.zeros(np.asarray(x, float).shape[:-1] + (1, 1))

    return model.DerivedCoefficients(
        dim=1, a=zmat,
        b_star=lambda x: np.zeros_like(np.asarray(x, float)),
        c=lambda x: np.zeros(np.asarray(x, float).shape[:-1]),
        sigma=zmat)


@pytest.fixture(scope="module")
def ou(ou_tanh, ou_tanh_coeffs):
    return ou_tanh, ou_tanh_coeffs


# ---------------------------------------------------------------------------
# grids and initial condition
# ---------------------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ValueError):
        kpde.Grid2D(0, 1, 7, 0, 1, 16)
    with pytest.raises(ValueError):
        kpde.Grid2D(1, 0, 16, 0, 1, 16)
    with pytest.raises(ValueError):
        kpde.Grid1D(-1, 1, 4)


def test_initial_condition_values(ou):
    m, _ = ou
    grid = _grid(n_x=101, n_y=101)
    sol = kpde.initial_condition(grid, T, m)
    j0 = 50  # y = 0 on a symmetric odd grid
    assert grid.y_nodes[j0] == 0.0
    u0 = m.initial_density(grid.x_nodes[:, None])
    np.testing.assert_array_equal(sol.values[:, j0], u0)

    # value halves at y = sqrt(2 T ln 2)
    y_half = math.sqrt(2.0 * T * math.log(2.0))
    ghalf = kpde.Grid2D(-6, 6, 101, -y_half, y_half, 9)
    shalf = kpde.initial_condition(ghalf, T, m)
    np.testing.assert_allclose(shalf.values[:, -1], u0 / 2.0, rtol=1e-12)


def test_initial_condition_zero_density():
    m = make_model_1d(lambda z: -z, lambda z: 1.0, np.tanh, lambda z: 0.0 * z)
    sol = kpde.initial_condition(_grid(n_x=51, n_y=51), T, m)
    assert not sol.values.any()


def test_initial_condition_requires_positive_T(ou):
    m, _ = ou
    with pytest.raises(ValueError):
        kpde.initial_condition(_grid(51, 51), 0.0, m)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def test_step_zero_dt_identity(ou):
    m, coeffs = ou
    sol = kpde.initial_condition(_grid(51, 51), T, m)
    same = kpde.step(sol, 0.0, coeffs, m)
    np.testing.assert_array_equal(same.values, sol.values)
    assert same.t_current == sol.t_current


def test_step_zero_sensor_preserves_column_ratios():
    m = model.get_model("zero-h")
    coeffs = model.derive_coefficients(m)
    grid = _grid(n_x=201, n_y=81)
    sol = kpde.initial_condition(grid, T, m)
    for _ in range(8):
        sol = kpde.step(sol, T / 64, coeffs, m)
    j1, j2, i = 40, 52, 100  # y = 0 and a mid-grid y, center x
    ratio = sol.values[i, j2] / sol.values[i, j1]
    expected = math.exp(-(grid.y_nodes[j2] ** 2 - grid.y_nodes[j1] ** 2) / (2 * T))
    assert ratio == pytest.approx(expected, rel=1e-12)


def test_separable_closed_form():
    # b = 0, a = 1, c = 0, h constant: heat-smoothed density times a
    # drifting Gaussian in y.
    m = model.get_model("const-h", level=0.4, rate=0.0)
    coeffs = model.derive_coefficients(m)
    grid = _grid()
    sol = kpde.solve(grid, T, 64, m, coeffs)
    X, Y = np.meshgrid(grid.x_nodes, grid.y_nodes, indexing="ij")
    exact = norm.pdf(X, scale=math.sqrt(0.25 + T)) * np.exp(-(Y - 0.4 * T) ** 2 / (2 * T))
    assert np.abs(sol.values - exact).max() < 2e-4


def test_advection_exact_shift_third_order():
    # freeze the x-operator: one step must move each row by h(x) dt
    coeffs0 = _zero_coeffs()
    m = model.get_model("ou-tanh")
    errs = {}
    for n_y in (101, 201, 401):
        grid = kpde.Grid2D(-2, 2, 41, -1, 1, n_y)
        vals = np.exp(-np.broadcast_to(grid.y_nodes, (41, n_y)) ** 2 / 0.05).copy()
        sol = kpde.PDESolution(grid=grid, values=vals, t_current=0.0, T_param=0.5)
        stepped = kpde.step(sol, 0.02, coeffs0, m)
        hx = np.tanh(grid.x_nodes)
        Yg = np.broadcast_to(grid.y_nodes, (41, n_y))
        exact = np.exp(-(Yg - hx[:, None] * 0.02) ** 2 / 0.05)
        errs[n_y] = np.abs(stepped.values[1:-1] - exact[1:-1]).max()
        assert errs[n_y] <= 10.0 * grid.dy**3
    assert errs[101] / errs[201] > 6.0  # at least third order in practice


def test_solver_breakdown_suggests_dt():
    def big_c(x):
        return np.full(np.asarray(x, float).shape[:-1], 5000.0)

    def one_mat(x):
        out = np.zeros(np.asarray(x, float).shape[:-1] + (1, 1))
        out[..., 0, 0] = 1.0
        return out

    coeffs = model.DerivedCoefficients(
        dim=1, a=one_mat, b_star=lambda x: np.zeros_like(np.asarray(x, float)),
        c=big_c, sigma=one_mat)
    nodes = np.linspace(-3, 3, 13)
    with pytest.raises(kpde.SolverBreakdownError, match="dt"):
        kpde.CrankNicolsonX(nodes, coeffs, 1e-3)


# ---------------------------------------------------------------------------
# solve-level properties
# ---------------------------------------------------------------------------

def test_mass_conservation_pure_heat():
    m = make_model_1d(lambda z: 0.0 * z, lambda z: 1.0, lambda z: 0.0 * z,
                      lambda z: np.exp(-z**2 / 0.5) / math.sqrt(0.5 * math.pi))
    coeffs = model.derive_coefficients(m)
    grid = _grid()
    sol = kpde.solve(grid, T, 64, m, coeffs)
    mass = np.trapezoid(np.trapezoid(sol.values, grid.y_nodes, axis=1), grid.x_nodes)
    expected = math.sqrt(2.0 * math.pi * T)  # unit x-mass times the y-Gaussian mass
    assert abs(mass - expected) < 0.005 * expected


def test_self_convergence_factor(ou):
    m, coeffs = ou
    sols = []
    for n_x, n_y, n_t in ((101, 101, 16), (201, 201, 32), (401, 401, 64)):
        grid = kpde.Grid2D(-6, 6, n_x, -6 * math.sqrt(T), 6 * math.sqrt(T), n_y)
        sols.append(kpde.solve(grid, T, n_t, m, coeffs))
    ref = sols[2].values
    e_coarse = np.abs(sols[0].values - ref[::4, ::4]).max()
    e_mid = np.abs(sols[1].values - ref[::2, ::2]).max()
    assert e_coarse / e_mid >= 3.0


def test_constant_sensor_factorization():
    mc = model.get_model("const-h", level=0.5)
    mz = model.get_model("zero-h")
    cc = model.derive_coefficients(mc)
    cz = model.derive_coefficients(mz)
    grid = _grid()
    vc = kpde.solve(grid, T, 64, mc, cc)
    vz = kpde.solve(grid, T, 64, mz, cz)
    w = vz.values[:, 320]  # y = 0 column of the advection-free solve
    assert grid.y_nodes[320] == 0.0
    predicted = np.outer(w, np.exp(-(grid.y_nodes - 0.5 * T) ** 2 / (2 * T)))
    assert np.abs(vc.values - predicted).max() < 1e-6


def test_solve_validation(ou):
    m, coeffs = ou
    with pytest.raises(ValueError):
        kpde.solve(_grid(51, 51), T, 3, m, coeffs)
    with pytest.raises(ValueError):
        kpde.solve(_grid(51, 51), 1.5, 8, m, coeffs)


def test_solution_positivity(ou):
    m, coeffs = ou
    sol = kpde.solve(_grid(201, 201), T, 32, m, coeffs)
    assert sol.values.min() >= -1e-10 * np.abs(sol.values).max()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def test_evaluate_at_time_zero_recovers_density(ou):
    m, _ = ou
    grid = _grid(n_x=101, n_y=101)
    sol = kpde.initial_condition(grid, T, m)
    x_val = grid.x_nodes[30]
    u0_x = float(m.initial_density(np.array([[x_val]]))[0])
    for y in (grid.y_nodes[40], grid.y_nodes[60], 0.123 * math.sqrt(T)):
        got = kpde.evaluate_approximation(sol, float(x_val), float(y))
        assert got == pytest.approx(u0_x, rel=1e-6)


def test_evaluate_zero_sensor_independent_of_y():
    m = model.get_model("zero-h")
    coeffs = model.derive_coefficients(m)
    sol = kpde.solve(_grid(), T, 64, m, coeffs)
    vals = [kpde.evaluate_approximation(sol, 0.25, y * math.sqrt(T))
            for y in (-2.0, -0.5, 0.0, 1.0, 2.5)]
    assert max(vals) - min(vals) < 1e-6 * max(vals)


def test_evaluate_matches_fk_v(ou):
    m, coeffs = ou
    sol = kpde.solve(_grid(), T, 64, m, coeffs)
    grid = paths.TimeGrid(T, 64)
    for i, y in enumerate((0.0, 0.5 * math.sqrt(T), -math.sqrt(T))):
        est = fk.fk_v(np.zeros(1), y, m, coeffs, grid, 100_000,
                      paths.stream(31, i))
        weighted = math.exp(y**2 / (2 * T)) * est.value
        tol = 3.0 * math.exp(y**2 / (2 * T)) * est.std_error + 2e-3
        assert abs(kpde.evaluate_approximation(sol, 0.0, y) - weighted) < tol


@pytest.mark.parametrize("name", ["zero-h", "const-h", "kalman"])
def test_two_routes_to_v_agree_on_builtins(name):
    # grid solve and Monte Carlo estimate of v must agree on every builtin
    m = model.get_model(name)
    coeffs = model.derive_coefficients(m)
    sol = kpde.solve(_grid(), T, 64, m, coeffs)
    grid = paths.TimeGrid(T, 64)
    y = 0.2 * math.sqrt(T)
    est = fk.fk_v(np.zeros(1), y, m, coeffs, grid, 50_000, paths.stream(32, 0))
    weighted = math.exp(y**2 / (2 * T)) * est.value
    tol = 3.0 * math.exp(y**2 / (2 * T)) * est.std_error + 2e-3
    assert abs(kpde.evaluate_approximation(sol, 0.0, y) - weighted) < tol


def test_evaluate_out_of_domain(ou):
    m, _ = ou
    sol = kpde.initial_condition(_grid(51, 51), T, m)
    with pytest.raises(kpde.OutOfDomainError, match="widen"):
        kpde.evaluate_approximation(sol, 0.0, 6.0 * math.sqrt(T))
    with pytest.raises(kpde.OutOfDomainError):
        kpde.evaluate_approximation(sol, 7.0, 0.0)


# ---------------------------------------------------------------------------
# splitting solver for the filtering density
# ---------------------------------------------------------------------------

def test_zakai_zero_sensor_matches_deterministic_solve():
    m = model.get_model("zero-h")
    coeffs = model.derive_coefficients(m)
    grid2 = _grid()
    v = kpde.solve(grid2, T, 64, m, coeffs)
    tg = paths.TimeGrid(T, 64)
    obs = paths.ObservationPath.from_increments(tg, np.zeros(64))
    zak = kpde.zakai_splitting_solve(grid2.x_grid, obs, m, coeffs)
    np.testing.assert_allclose(zak.values, v.values[:, 320], rtol=1e-12, atol=1e-300)


def test_zakai_constant_sensor_telescopes():
    h0 = 0.5
    mc = model.get_model("const-h", level=h0)
    mz = model.get_model("zero-h")
    cc = model.derive_coefficients(mc)
    cz = model.derive_coefficients(mz)
    g1 = kpde.Grid1D(-6, 6, 401)
    tg = paths.TimeGrid(T, 64)
    obs = paths.sample_observation_p1(tg, paths.stream(33, 0))
    zc = kpde.zakai_splitting_solve(g1, obs, mc, cc)
    w = kpde.zakai_splitting_solve(
        g1, paths.ObservationPath.from_increments(tg, np.zeros(64)), mz, cz)
    predicted = w.values * math.exp(h0 * obs.terminal - 0.5 * h0**2 * T)
    np.testing.assert_allclose(zc.values, predicted, rtol=1e-12, atol=1e-300)


def test_zakai_matches_fk_u(ou):
    m, coeffs = ou
    g1 = kpde.Grid1D(-6, 6, 401)
    tg = paths.TimeGrid(T, 128)
    obs = paths.sample_observation_p1(tg, paths.stream(34, 0))
    zak = kpde.zakai_splitting_solve(g1, obs, m, coeffs)
    x = 0.25
    u_grid = float(np.interp(x, g1.nodes, zak.values))
    est = fk.fk_u(np.array([x]), obs, m, coeffs, tg, 100_000, paths.stream(34, 1))
    assert abs(est.value - u_grid) < 3.0 * est.std_error + 2e-3


def test_zakai_positivity_and_linearity(ou):
    m, coeffs = ou
    g1 = kpde.Grid1D(-6, 6, 201)
    tg = paths.TimeGrid(T, 32)
    obs = paths.sample_observation_p1(tg, paths.stream(35, 0))
    base = kpde.zakai_splitting_solve(g1, obs, m, coeffs)
    assert base.values.min() >= -1e-10 * np.abs(base.values).max()

    doubled = model.FilteringModel(
        dim=1, drift=m.drift, diffusion=m.diffusion, sensor=m.sensor,
        initial_density=lambda x: 2.0 * m.initial_density(x),
        db=m.db, da=m.da, d2a=m.d2a, dh=m.dh)
    scaled = kpde.zakai_splitting_solve(g1, obs, doubled, coeffs)
    # power-of-two scaling commutes with every float operation in the solver
    np.testing.assert_array_equal(scaled.values, 2.0 * base.values)


def test_zakai_positivity_fallback_on_spike(ou):
    # a nodal spike makes the Crank-Nicolson step ring negative; the solver
    # must fall back to damped implicit steps and keep the density >= 0
    m, coeffs = ou
    g1 = kpde.Grid1D(-6, 6, 401)  # large dt * a / dx^2: CN oscillates
    tg = paths.TimeGrid(T, 4)
    obs = paths.sample_observation_p1(tg, paths.stream(40, 0))
    spike = np.zeros(401)
    spike[200] = 1.0
    diag = {}
    vals = kpde.zakai_splitting_solve_batch(
        g1, obs.increments[None, :], T, m, coeffs, u0_values=spike,
        diagnostics=diag)
    assert vals.min() >= 0.0
    assert diag["cn_fallbacks"] >= 1
    assert diag["worst_undershoot"] < 0.0


def test_zakai_batch_matches_single(ou):
    m, coeffs = ou
    g1 = kpde.Grid1D(-6, 6, 201)
    tg = paths.TimeGrid(T, 32)
    rng = paths.stream(36, 0)
    inc = paths.sample_observation_p1_batch(tg, 5, rng)
    batch = kpde.zakai_splitting_solve_batch(g1, inc, T, m, coeffs)
    for j in range(5):
        obs = paths.ObservationPath.from_increments(tg, inc[j])
        single = kpde.zakai_splitting_solve(g1, obs, m, coeffs)
        np.testing.assert_allclose(batch[:, j], single.values, rtol=1e-12,
                                   atol=1e-300)


# ---------------------------------------------------------------------------
# export formats
# ---------------------------------------------------------------------------

def test_csv_export(tmp_path, ou):
    m, _ = ou
    sol = kpde.initial_condition(kpde.Grid2D(-1, 1, 9, -1, 1, 8), T, m)
    path = tmp_path / "surf.csv"
    kpde.export_csv(sol, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,value"
    assert len(lines) == 1 + 9 * 8
    x0, y0, v0 = map(float, lines[1].split(","))
    assert (x0, y0) == (-1.0, -1.0)
    assert v0 == sol.values[0, 0]


def test_snapshot_roundtrip(tmp_path, ou):
    m, coeffs = ou
    sol = kpde.solve(_grid(64, 64), T, 8, m, coeffs)
    path = tmp_path / "v.snap"
    kpde.save_snapshot(sol, path)
    back = kpde.load_snapshot(path)
    np.testing.assert_array_equal(back.values, sol.values)
    assert back.grid == sol.grid
    assert back.t_current == sol.t_current and back.T_param == sol.T_param
    with pytest.raises(ValueError, match="magic"):
        bad = tmp_path / "bad.snap"
        bad.write_bytes(b"NOTASNAP" + b"\0" * 100)
        kpde.load_snapshot(bad)
