"""Deterministic grid solvers (d = 1).

Two solvers share one Crank-Nicolson core for the second-order operator
``A w = 1/2 a(x) w'' + b*(x) w' + c(x) w`` on a uniform x-grid with
homogeneous Dirichlet boundaries:

* ``solve`` integrates the degenerate equation
  ``dv/dt = A v - h(x) dv/dy`` on an (x, y) tensor grid by Strang splitting:
  half-step y-transport, full x-step, half-step y-transport.  The transport
  has no y-diffusion, so it is discretized as an exact semi-Lagrangian
  shift: the profile at fixed x moves by ``h(x) * dt`` toward +y per unit
  step, evaluated by 4-point cubic interpolation.  Where the local stencil
  is monotone the interpolant is clipped to the bracketing nodal values
  (monotonicity preserving without flattening smooth extrema).

* ``zakai_splitting_solve`` integrates the filtering density for a fixed
  observation path: per step a full Crank-Nicolson x-step followed by the
  multiplicative update ``u <- u * exp(h dY_k - 1/2 h^2 dt)``.

The y-direction is unconditionally stable (exact shifts); the x-step is
implicit, so there is no CFL restriction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.linalg import solve_banded

from .model import ConfigurationError, DerivedCoefficients, FilteringModel
from .paths import ObservationPath

Array = np.ndarray

_SNAPSHOT_MAGIC = b"ZKSNAP01"
_UNDERSHOOT_TOL = 1e-10


class SolverBreakdownError(RuntimeError):
    """The implicit x-step matrix lost diagonal dominance."""


class OutOfDomainError(ValueError):
    """An evaluation point fell outside the solution grid."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform x-grid with n_x nodes."""

    x_min: float
    x_max: float
    n_x: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.n_x < 8:
            raise ValueError(f"need at least 8 x-nodes, got {self.n_x}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @cached_property
    def nodes(self) -> Array:
        return np.linspace(self.x_min, self.x_max, self.n_x)


@dataclass(frozen=True)
class Grid2D:
    """Tensor-product (x, y) grid with uniform spacings."""

    x_min: float
    x_max: float
    n_x: int
    y_min: float
    y_max: float
    n_y: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("grid bounds must be increasing")
        if self.n_x < 8 or self.n_y < 8:
            raise ValueError(f"need at least 8 nodes per axis, got {self.n_x}x{self.n_y}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.n_y - 1)

    @cached_property
    def x_nodes(self) -> Array:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @cached_property
    def y_nodes(self) -> Array:
        return np.linspace(self.y_min, self.y_max, self.n_y)

    @property
    def x_grid(self) -> Grid1D:
        return Grid1D(self.x_min, self.x_max, self.n_x)


@dataclass
class PDESolution:
    """Nodal values of v(t, x, y) for one horizon parameter T."""

    grid: Grid2D
    values: Array  # (n_x, n_y)
    t_current: float
    T_param: float
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ZakaiSolution:
    """Filtering density on an x-grid driven by one observation path."""

    grid: Grid1D
    values: Array  # (n_x,)
    t_current: float
    obs: ObservationPath | None = None
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Crank-Nicolson x-operator
# ---------------------------------------------------------------------------

def _nodes_as_points(nodes: Array) -> Array:
    return np.asarray(nodes, float)[:, None]


class CrankNicolsonX:
    """Banded Crank-Nicolson step for the 1-d second-order operator.

    Interior rows discretize ``A``; boundary rows pin homogeneous Dirichlet
    values.  ``apply`` advances one or many columns by one time step.
    """

    def __init__(self, x_nodes: Array, coeffs: DerivedCoefficients, dt: float):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        pts = _nodes_as_points(x_nodes)
        a = np.asarray(coeffs.a(pts), float)[:, 0, 0]
        b = np.asarray(coeffs.b_star(pts), float)[:, 0]
        c = np.asarray(coeffs.c(pts), float)
        n = len(x_nodes)
        dx = float(x_nodes[1] - x_nodes[0])

        lower = a / (2.0 * dx * dx) - b / (2.0 * dx)   # coefficient of w_{i-1}
        diag = -a / (dx * dx) + c                      # coefficient of w_i
        upper = a / (2.0 * dx * dx) + b / (2.0 * dx)   # coefficient of w_{i+1}

        half = 0.5 * dt
        m_diag = 1.0 - half * diag
        m_low = -half * lower
        m_up = -half * upper
        # Dirichlet rows: identity, zero right-hand side.
        m_diag[0] = m_diag[-1] = 1.0
        m_low[0] = m_low[-1] = 0.0
        m_up[0] = m_up[-1] = 0.0

        margin = np.abs(m_diag[1:-1]) - np.abs(m_low[1:-1]) - np.abs(m_up[1:-1])
        if np.min(m_diag[1:-1]) <= 0.0 or np.min(margin) <= 0.0:
            scale = half * (np.abs(diag[1:-1]) + np.abs(lower[1:-1]) + np.abs(upper[1:-1]))
            suggested = dt * 0.45 / float(np.max(scale))
            raise SolverBreakdownError(
                "implicit x-step not diagonally dominant for this dt/dx; "
                f"try dt <= {suggested:.3e}")

        ab = np.zeros((3, n))
        ab[0, 1:] = m_up[:-1]
        ab[1, :] = m_diag
        ab[2, :-1] = m_low[1:]
        self._ab = ab
        self._plus = (half * lower, half * diag, half * upper)
        self.dt = dt

    def apply(self, w: Array) -> Array:
        """Advance values by one step; w has shape (n_x,) or (n_x, m)."""
        low, diag, up = self._plus
        if w.ndim == 1:
            rhs = w + diag * w
            rhs[1:-1] += low[1:-1] * w[:-2] + up[1:-1] * w[2:]
            rhs[0] = 0.0
            rhs[-1] = 0.0
        else:
            rhs = w + diag[:, None] * w
            rhs[1:-1] += low[1:-1, None] * w[:-2] + up[1:-1, None] * w[2:]
            rhs[0] = 0.0
            rhs[-1] = 0.0
        out = solve_banded((1, 1), self._ab, rhs, check_finite=False)
        if not np.isfinite(out).all():
            raise SolverBreakdownError("implicit x-step produced nonfinite values")
        return out

    def apply_implicit_half(self, w: Array) -> Array:
        """One backward-Euler step of size dt/2 (same factor matrix).

        The matrix is an M-matrix for sane dt/dx, so this step preserves
        positivity; two of them replace one Crank-Nicolson step when the
        latter undershoots.
        """
        rhs = np.array(w, copy=True)
        rhs[0] = 0.0
        rhs[-1] = 0.0
        out = solve_banded((1, 1), self._ab, rhs, check_finite=False)
        if not np.isfinite(out).all():
            raise SolverBreakdownError("implicit x-step produced nonfinite values")
        return out


# ---------------------------------------------------------------------------
# semi-Lagrangian y-transport
# ---------------------------------------------------------------------------

def _shift_rows(values: Array, shift_cells: Array) -> Array:
    """Shift each row of ``values`` by ``shift_cells[i]`` grid cells in +y.

    Exact semi-Lagrangian evaluation: row i is resampled at ``y - s_i`` with
    4-point cubic interpolation; out-of-domain samples read as zero
    (Dirichlet).  On locally monotone stencils the result is clipped to the
    bracketing nodal values.
    """
    n_x, n_y = values.shape
    j = np.arange(n_y)
    p = j[None, :] - np.asarray(shift_cells, float)[:, None]
    base = np.floor(p).astype(np.int64)
    f = p - base

    gathered = []
    for k in (-1, 0, 1, 2):
        idx = base + k
        valid = (idx >= 0) & (idx < n_y)
        vals = np.take_along_axis(values, np.clip(idx, 0, n_y - 1), axis=1)
        gathered.append(np.where(valid, vals, 0.0))
    vm1, v0, v1, v2 = gathered

    w_m1 = -f * (f - 1.0) * (f - 2.0) / 6.0
    w_0 = (f * f - 1.0) * (f - 2.0) / 2.0
    w_1 = -f * (f + 1.0) * (f - 2.0) / 2.0
    w_2 = f * (f * f - 1.0) / 6.0
    out = w_m1 * vm1 + w_0 * v0 + w_1 * v1 + w_2 * v2

    s1 = v0 - vm1
    s2 = v1 - v0
    s3 = v2 - v1
    mono = ((s1 >= 0) & (s2 >= 0) & (s3 >= 0)) | ((s1 <= 0) & (s2 <= 0) & (s3 <= 0))
    lo = np.minimum(v0, v1)
    hi = np.maximum(v0, v1)
    return np.where(mono, np.clip(out, lo, hi), out)


def _transport_half_step(values: Array, h_nodes: Array, dy: float, delta: float) -> Array:
    if delta == 0.0:
        return values
    # dv/dt = -h dv/dy: profile moves toward +y at speed h, so the
    # semi-Lagrangian samples at y - h * delta.
    return _shift_rows(values, h_nodes * delta / dy)


# ---------------------------------------------------------------------------
# transport-diffusion solver for v
# ---------------------------------------------------------------------------

def _require_1d(model: FilteringModel) -> None:
    if model.dim != 1:
        raise ConfigurationError("grid solvers support d = 1 only")


def initial_condition(grid: Grid2D, T: float, model: FilteringModel) -> PDESolution:
    """Initial surface ``v(0, x, y) = u0(x) exp(-y^2 / (2T))``."""
    _require_1d(model)
    if T <= 0:
        raise ValueError(f"horizon parameter must be positive, got {T}")
    u0 = np.asarray(model.initial_density(_nodes_as_points(grid.x_nodes)), float)
    gauss = np.exp(-grid.y_nodes**2 / (2.0 * T))
    return PDESolution(grid=grid, values=np.outer(u0, gauss), t_current=0.0, T_param=T)


def _monitor(values: Array, diagnostics: dict) -> None:
    vmin = float(values.min())
    scale = float(np.abs(values).max())
    diagnostics["min_value"] = min(diagnostics.get("min_value", 0.0), vmin)
    if vmin < -_UNDERSHOOT_TOL * max(scale, 1e-300):
        diagnostics["undershoot_events"] = diagnostics.get("undershoot_events", 0) + 1


def step(sol: PDESolution, dt: float, coeffs: DerivedCoefficients,
         model: FilteringModel, _cn: CrankNicolsonX | None = None) -> PDESolution:
    """One Strang step: half y-transport, full x-step, half y-transport."""
    _require_1d(model)
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if dt == 0.0:
        return PDESolution(grid=sol.grid, values=sol.values.copy(),
                           t_current=sol.t_current, T_param=sol.T_param,
                           diagnostics=dict(sol.diagnostics))
    grid = sol.grid
    h_nodes = np.asarray(model.sensor(_nodes_as_points(grid.x_nodes)), float)
    cn = _cn if _cn is not None and _cn.dt == dt else CrankNicolsonX(grid.x_nodes, coeffs, dt)

    v = _transport_half_step(sol.values, h_nodes, grid.dy, 0.5 * dt)
    v = cn.apply(v)
    v = _transport_half_step(v, h_nodes, grid.dy, 0.5 * dt)

    diagnostics = dict(sol.diagnostics)
    _monitor(v, diagnostics)
    return PDESolution(grid=grid, values=v, t_current=sol.t_current + dt,
                       T_param=sol.T_param, diagnostics=diagnostics)


def solve(grid: Grid2D, T: float, n_t: int, model: FilteringModel,
          coeffs: DerivedCoefficients) -> PDESolution:
    """Integrate the degenerate equation to t = T in n_t Strang steps."""
    _require_1d(model)
    if n_t < 4:
        raise ValueError(f"need at least 4 time steps, got {n_t}")
    if not (0.0 < T < 1.0):
        raise ValueError(f"horizon must lie in (0, 1), got {T}")
    sol = initial_condition(grid, T, model)
    dt = T / n_t
    cn = CrankNicolsonX(grid.x_nodes, coeffs, dt)
    boundary0 = _boundary_max(sol.values)
    for _ in range(n_t):
        sol = step(sol, dt, coeffs, model, _cn=cn)
    sol.t_current = T  # pin the endpoint against dt round-off accumulation
    # truncation-leak indicators: the profile should stay negligible here
    sol.diagnostics["boundary_initial_max"] = boundary0
    sol.diagnostics["boundary_final_max"] = _boundary_max(sol.values)
    return sol


def _boundary_max(values: Array) -> float:
    return float(max(np.abs(values[0]).max(), np.abs(values[-1]).max(),
                     np.abs(values[:, 0]).max(), np.abs(values[:, -1]).max()))


def evaluate_approximation(sol: PDESolution, x, y_obs):
    """Weighted read-out ``exp(y^2 / (2T)) * v(t, x, y)`` by bicubic interpolation.

    ``x`` and ``y_obs`` may be scalars or equal-length arrays.  Points must
    lie inside the grid with one-cell y-margin; the caller widens the y-span
    on an out-of-domain error rather than extrapolating silently.
    """
    grid = sol.grid
    x_arr = np.atleast_1d(np.asarray(x, float))
    y_arr = np.atleast_1d(np.asarray(y_obs, float))
    x_arr, y_arr = np.broadcast_arrays(x_arr, y_arr)
    if (x_arr.min() < grid.x_min) or (x_arr.max() > grid.x_max):
        raise OutOfDomainError(
            f"x in [{x_arr.min():.4g}, {x_arr.max():.4g}] outside grid "
            f"[{grid.x_min}, {grid.x_max}]")
    if (y_arr.min() < grid.y_min + grid.dy) or (y_arr.max() > grid.y_max - grid.dy):
        raise OutOfDomainError(
            f"y in [{y_arr.min():.4g}, {y_arr.max():.4g}] outside safe range "
            f"[{grid.y_min + grid.dy:.4g}, {grid.y_max - grid.dy:.4g}]; widen the y-span")
    spline = RectBivariateSpline(grid.x_nodes, grid.y_nodes, sol.values, kx=3, ky=3)
    vals = spline.ev(x_arr.ravel(), y_arr.ravel()).reshape(x_arr.shape)
    out = np.exp(y_arr**2 / (2.0 * sol.T_param)) * vals
    if np.isscalar(x) and np.isscalar(y_obs):
        return float(out.ravel()[0])
    return out


# ---------------------------------------------------------------------------
# splitting-up reference solver for the filtering density
# ---------------------------------------------------------------------------

def zakai_splitting_solve_batch(x_grid: Grid1D, increments: Array, T: float,
                                model: FilteringModel, coeffs: DerivedCoefficients,
                                u0_values: Array | None = None,
                                diagnostics: dict | None = None) -> Array:
    """Splitting solver for many observation paths sharing one time grid.

    ``increments`` has shape (n_paths, n_steps); the same Crank-Nicolson
    factorization advances every path, then each column gets its own
    multiplicative observation update.  Returns values (n_x, n_paths).

    Positivity: Crank-Nicolson undershoot beyond the monitored tolerance
    triggers a fallback to two backward-Euler half steps (positivity
    preserving); rounding-level negatives are clamped to zero.  Fallback
    and clamp counts land in ``diagnostics`` when a dict is supplied.
    """
    _require_1d(model)
    increments = np.asarray(increments, float)
    if increments.ndim != 2:
        raise ValueError("increments must be 2-d (n_paths, n_steps)")
    n_paths, n_steps = increments.shape
    if n_steps < 1:
        raise ValueError("empty observation grid")
    dt = T / n_steps
    nodes = x_grid.nodes
    h = np.asarray(model.sensor(_nodes_as_points(nodes)), float)
    if u0_values is None:
        u0_values = np.asarray(model.initial_density(_nodes_as_points(nodes)), float)
    cn = CrankNicolsonX(nodes, coeffs, dt)

    u = np.repeat(u0_values[:, None], n_paths, axis=1)
    half_h2_dt = 0.5 * h**2 * dt
    fallbacks = 0
    clamped = 0
    worst_undershoot = 0.0
    for k in range(n_steps):
        stepped = cn.apply(u)
        vmin = float(stepped.min())
        worst_undershoot = min(worst_undershoot, vmin)
        if vmin < -_UNDERSHOOT_TOL * float(np.abs(stepped).max()):
            stepped = cn.apply_implicit_half(cn.apply_implicit_half(u))
            fallbacks += 1
        negatives = stepped < 0.0
        if negatives.any():
            clamped += int(negatives.sum())
            stepped[negatives] = 0.0
        u = stepped
        u *= np.exp(h[:, None] * increments[:, k][None, :] - half_h2_dt[:, None])
    if diagnostics is not None:
        diagnostics.update(cn_fallbacks=fallbacks, clamped_nodes=clamped,
                           worst_undershoot=worst_undershoot)
    return u


def zakai_splitting_solve(x_grid: Grid1D, obs: ObservationPath,
                          model: FilteringModel,
                          coeffs: DerivedCoefficients) -> ZakaiSolution:
    """Splitting solver for the filtering density along one observation path."""
    diagnostics: dict = {}
    values = zakai_splitting_solve_batch(
        x_grid, obs.increments[None, :], obs.grid.horizon, model, coeffs,
        diagnostics=diagnostics)[:, 0]
    diagnostics["min_value"] = float(values.min())
    return ZakaiSolution(grid=x_grid, values=values, t_current=obs.grid.horizon,
                         obs=obs, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def export_csv(sol: PDESolution, path) -> None:
    """Write rows ``x,y,value`` for the full surface."""
    grid = sol.grid
    with open(path, "w") as fh:
        fh.write("x,y,value\n")
        for i, xv in enumerate(grid.x_nodes):
            for jj, yv in enumerate(grid.y_nodes):
                fh.write(f"{xv:.17g},{yv:.17g},{sol.values[i, jj]:.17g}\n")


def save_snapshot(sol: PDESolution, path) -> None:
    """Compact binary snapshot.

    Layout: 8-byte magic ``ZKSNAP01``; two little-endian int64 (n_x, n_y);
    six little-endian float64 (x_min, x_max, y_min, y_max, t_current,
    T_param); then n_x * n_y little-endian float64 values, row-major
    (x-major).
    """
    grid = sol.grid
    header = struct.pack("<8sqq6d", _SNAPSHOT_MAGIC, grid.n_x, grid.n_y,
                         grid.x_min, grid.x_max, grid.y_min, grid.y_max,
                         sol.t_current, sol.T_param)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(sol.values, dtype="<f8").tobytes())


def load_snapshot(path) -> PDESolution:
    """Read a snapshot written by :func:`save_snapshot`."""
    head_size = struct.calcsize("<8sqq6d")
    with open(path, "rb") as fh:
        head = fh.read(head_size)
        magic, n_x, n_y, x_min, x_max, y_min, y_max, t_current, T_param = \
            struct.unpack("<8sqq6d", head)
        if magic != _SNAPSHOT_MAGIC:
            raise ValueError(f"not a snapshot file (magic {magic!r})")
        data = np.frombuffer(fh.read(8 * n_x * n_y), dtype="<f8").reshape(n_x, n_y)
    grid = Grid2D(x_min=x_min, x_max=x_max, n_x=n_x, y_min=y_min, y_max=y_max, n_y=n_y)
    return PDESolution(grid=grid, values=data.copy(), t_current=t_current, T_param=T_param)
