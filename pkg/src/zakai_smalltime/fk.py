"""Monte Carlo estimators for the two Feynman-Kac representations.

Both the filtering density ``u(T, x)`` and the transport-PDE solution
``v(T, x, y)`` are expectations of functionals of the same auxiliary
diffusion started at x.  The estimators here share one path engine so that
coupled quantities reuse identical trajectories:

* ``fk_u``   -- mean of  u0(xi_T) exp( int c ds + int h(xi_{T-s}) dY_s
                                        - 1/2 int h(xi_s)^2 ds )
* ``fk_v``   -- mean of  u0(xi_T) exp( int c ds - (y - int h ds)^2 / (2T) )
* ``coupled_difference`` -- per-path difference of the u-functional and the
  exp(y^2/2T)-weighted v-functional, with the weighted exponent rewritten as
  ``int g dY - 1/2 int g^2 ds`` for the constant integrand
  ``g = (1/T) int h(xi_r) dr``.  Rewriting makes the two exponents share
  their arithmetic, so a constant sensor gives a difference of exactly zero
  per path (for power-of-two step counts where the time average of a
  constant is exact).

Time integrals are left-endpoint rectangle sums; the reversed integrand of
the stochastic integral indexes the stored forward path backwards.  Each
per-path exponent is assembled in log space and exponentiated once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DerivedCoefficients, FilteringModel
from .paths import ObservationPath, TimeGrid, em_step

Array = np.ndarray

_CHUNK = 1 << 14


class FunctionalOverflowError(ArithmeticError):
    """A per-path exponential overflowed (unbounded coefficients?)."""


@dataclass(frozen=True)
class FKEstimate:
    value: float
    std_error: float
    n_paths: int
    dt: float


def _mean_se(samples: Array, dt: float) -> FKEstimate:
    n = samples.shape[0]
    value = float(np.add.reduce(samples) / n)
    if n > 1:
        se = float(np.sqrt(np.add.reduce((samples - value) ** 2) / (n - 1) / n))
    else:
        se = 0.0
    return FKEstimate(value=value, std_error=se, n_paths=n, dt=dt)


def _check_finite(samples: Array, what: str) -> None:
    if not np.isfinite(samples).all():
        raise FunctionalOverflowError(
            f"nonfinite {what} functional; check boundedness of h and c")


def _path_functionals(
    x: Array,
    model: FilteringModel,
    coeffs: DerivedCoefficients,
    grid: TimeGrid,
    n_paths: int,
    rng: np.random.Generator,
    dY: Array | None = None,
    need_g: bool = False,
):
    """Per-path building blocks shared by all estimators.

    Returns a dict with per-path arrays:

    * ``u0_T``  -- initial density evaluated at the path endpoint;
    * ``c_int`` -- left-endpoint rectangle sum of c along the path;
    * ``h_int`` -- rectangle sum of h (the time integral over [0, T]);
    * ``h2_int``-- rectangle sum of h^2;
    * ``ito_f`` -- stochastic integral of the time-reversed sensor against
      dY (present when ``dY`` is given); ``dY`` may be a shared vector of
      shape (n,) or per-path increments of shape (n_paths, n);
    * ``ito_g``/``g2_int`` -- same two integrals for the constant-in-time
      integrand equal to the path's time average of h (when ``need_g``).
    """
    d = coeffs.dim
    n = grid.n_steps
    dt = grid.dt
    x = np.atleast_1d(np.asarray(x, float))
    if x.shape == (d,):
        x = np.broadcast_to(x, (n_paths, d))
    if x.shape != (n_paths, d):
        raise ValueError(f"start states shape {x.shape} != ({n_paths}, {d})")
    if dY is not None:
        dY = np.asarray(dY, float)
        if dY.shape not in ((n,), (n_paths, n)):
            raise ValueError(f"dY shape {dY.shape} incompatible with grid/paths")

    parts = {k: [] for k in ("u0_T", "c_int", "h_int", "h2_int", "ito_f", "ito_g", "g2_int")}
    for lo in range(0, n_paths, _CHUNK):
        hi = min(lo + _CHUNK, n_paths)
        m = hi - lo
        states = np.array(x[lo:hi], copy=True)
        h_nodes = np.empty((m, n + 1))
        c_int = np.zeros(m)
        h2_int = np.zeros(m)
        h_nodes[:, 0] = np.asarray(model.sensor(states), float)
        for k in range(n):
            c_int += np.asarray(coeffs.c(states), float) * dt
            h2_int += h_nodes[:, k] ** 2 * dt
            dB = rng.normal(0.0, np.sqrt(dt), size=(m, d))
            states = em_step(states, coeffs, dt, dB)
            h_nodes[:, k + 1] = np.asarray(model.sensor(states), float)
        if not np.isfinite(states).all():
            raise FunctionalOverflowError("auxiliary path became nonfinite")

        h_sum = np.add.reduce(h_nodes[:, :n], axis=1)
        parts["u0_T"].append(np.asarray(model.initial_density(states), float))
        parts["c_int"].append(c_int)
        parts["h_int"].append(h_sum * dt)
        parts["h2_int"].append(h2_int)

        if dY is not None:
            dY_chunk = dY if dY.ndim == 1 else dY[lo:hi]
            ito_f = np.zeros(m)
            # integrand on [t_k, t_{k+1}) is h at the time-reversed node T - t_k
            for k in range(n):
                step_inc = dY_chunk[k] if dY.ndim == 1 else dY_chunk[:, k]
                ito_f += h_nodes[:, n - k] * step_inc
            parts["ito_f"].append(ito_f)
            if need_g:
                g0 = h_sum / n
                ito_g = np.zeros(m)
                g2_int = np.zeros(m)
                g0_sq = g0**2
                # same loop structure as ito_f/h2_int so that a constant
                # sensor makes the f- and g-integrals agree bit for bit
                for k in range(n):
                    step_inc = dY_chunk[k] if dY.ndim == 1 else dY_chunk[:, k]
                    ito_g += g0 * step_inc
                    g2_int += g0_sq * dt
                parts["ito_g"].append(ito_g)
                parts["g2_int"].append(g2_int)

    return {k: np.concatenate(v) for k, v in parts.items() if v}


def fk_u(x: Array, obs: ObservationPath, model: FilteringModel,
         coeffs: DerivedCoefficients, grid: TimeGrid, n_paths: int,
         rng: np.random.Generator, return_samples: bool = False):
    """Monte Carlo estimate of the filtering density u(T, x) given Y."""
    if obs.grid != grid:
        raise ValueError("observation path lives on a different grid")
    p = _path_functionals(x, model, coeffs, grid, n_paths, rng, dY=obs.increments)
    with np.errstate(over="ignore"):
        samples = p["u0_T"] * np.exp(p["c_int"] + p["ito_f"] - 0.5 * p["h2_int"])
    _check_finite(samples, "u")
    est = _mean_se(samples, grid.dt)
    return (est, samples) if return_samples else est


def fk_v(x: Array, y: float, model: FilteringModel, coeffs: DerivedCoefficients,
         grid: TimeGrid, n_paths: int, rng: np.random.Generator,
         return_samples: bool = False):
    """Monte Carlo estimate of the transport-PDE solution v(T, x, y).

    Only deterministic time integrals enter; the rng drives the auxiliary
    paths alone, so the same stream as :func:`fk_u` reuses identical paths.
    """
    T = grid.horizon
    p = _path_functionals(x, model, coeffs, grid, n_paths, rng)
    with np.errstate(over="ignore"):
        samples = p["u0_T"] * np.exp(p["c_int"] - (y - p["h_int"]) ** 2 / (2.0 * T))
    _check_finite(samples, "v")
    est = _mean_se(samples, grid.dt)
    return (est, samples) if return_samples else est


def coupled_difference(x: Array, obs: ObservationPath, model: FilteringModel,
                       coeffs: DerivedCoefficients, grid: TimeGrid, n_paths: int,
                       rng: np.random.Generator, return_samples: bool = False):
    """Estimate u(T, x) minus the weighted v along the same paths.

    Per path the weighted-v exponent is rewritten through the constant
    integrand ``g = (1/T) int h dr``, turning the difference into one
    expectation of a difference of exponential functionals; mean and
    standard error are those of the pathwise difference.
    """
    if obs.grid != grid:
        raise ValueError("observation path lives on a different grid")
    p = _path_functionals(x, model, coeffs, grid, n_paths, rng,
                          dY=obs.increments, need_g=True)
    with np.errstate(over="ignore"):
        base = p["u0_T"] * np.exp(p["c_int"])
        u_side = base * np.exp(p["ito_f"] - 0.5 * p["h2_int"])
        v_side = base * np.exp(p["ito_g"] - 0.5 * p["g2_int"])
    _check_finite(u_side, "u")
    _check_finite(v_side, "weighted v")
    diff = u_side - v_side
    est = _mean_se(diff, grid.dt)
    if return_samples:
        return est, {"diff": diff, "u": u_side, "v_weighted": v_side}
    return est
