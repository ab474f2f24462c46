"""Time grids, counter-based random streams and SDE path generation.

Random streams use the Philox counter-based bit generator keyed by
``(seed, stream_id)`` through :class:`numpy.random.SeedSequence` spawn keys,
so distinct stream ids give statistically independent streams without any
coordination and every path is reproducible bit-for-bit.

Conventions shared by all consumers:

* stochastic integrals are left-endpoint (Ito) sums;
* time integrals along paths are left-endpoint rectangle sums;
* the auxiliary diffusion steps with Euler-Maruyama.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import DerivedCoefficients, FilteringModel

Array = np.ndarray


class PathBlowupError(RuntimeError):
    """A simulated state became nonfinite."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with n_steps steps (0 < T < 1)."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (0.0 < self.horizon < 1.0):
            raise ValueError(f"horizon must lie in (0, 1), got {self.horizon}")
        if self.n_steps < 1:
            raise ValueError(f"empty grid: n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def times(self) -> Array:
        # linspace pins both endpoints exactly; no dt round-off drift at T.
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


@dataclass(frozen=True)
class SamplePath:
    """States of one simulated trajectory on a time grid."""

    grid: TimeGrid
    states: Array  # (n_steps + 1, d)
    seed_info: tuple | None = None


@dataclass(frozen=True)
class ObservationPath:
    """Observation offset path: values[k] = Y_{t_k} - y0."""

    grid: TimeGrid
    values: Array      # (n_steps + 1,)
    increments: Array  # (n_steps,)

    @classmethod
    def from_increments(cls, grid: TimeGrid, increments: Array) -> "ObservationPath":
        increments = np.asarray(increments, float)
        if increments.shape != (grid.n_steps,):
            raise ValueError(
                f"expected {grid.n_steps} increments, got shape {increments.shape}")
        values = np.zeros(grid.n_steps + 1)
        np.cumsum(increments, out=values[1:])
        # Re-derive increments from the stored values so that
        # values[k+1] - values[k] == increments[k] holds exactly.
        return cls(grid=grid, values=values, increments=np.diff(values))

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


def stream(seed: int, stream_id: int | tuple = 0) -> np.random.Generator:
    """Independent, reproducible generator for (seed, stream_id)."""
    key = stream_id if isinstance(stream_id, tuple) else (stream_id,)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sample_brownian(grid: TimeGrid, dimension: int, rng: np.random.Generator) -> Array:
    """I.i.d. Gaussian increments, shape (n_steps, dimension), variance dt."""
    if dimension < 1:
        raise ValueError(f"dimension must be positive, got {dimension}")
    return rng.normal(0.0, np.sqrt(grid.dt), size=(grid.n_steps, dimension))


def coarsen_increments(increments: Array) -> Array:
    """Pairwise-sum increments from a 2n grid onto the n grid (for coupled
    Richardson checks).  Requires an even number of steps."""
    increments = np.asarray(increments, float)
    if increments.shape[0] % 2 != 0:
        raise ValueError("need an even number of steps to coarsen")
    return increments[0::2] + increments[1::2]


def em_step(states: Array, coeffs: DerivedCoefficients, dt: float, dB: Array) -> Array:
    """One Euler-Maruyama step of the auxiliary diffusion (batched)."""
    drift = np.asarray(coeffs.b_star(states), float)
    sig = np.asarray(coeffs.sigma(states), float)
    return states + drift * dt + np.einsum("...ij,...j->...i", sig, dB)


def simulate_xi_batch(x0: Array, coeffs: DerivedCoefficients, grid: TimeGrid,
                      n_paths: int, rng: np.random.Generator) -> Array:
    """Simulate the auxiliary diffusion; returns states (n_paths, n_steps+1, d)."""
    x0 = np.atleast_1d(np.asarray(x0, float))
    d = coeffs.dim
    if x0.shape == (d,):
        x0 = np.broadcast_to(x0, (n_paths, d))
    if x0.shape != (n_paths, d):
        raise ValueError(f"x0 shape {x0.shape} incompatible with ({n_paths}, {d})")
    out = np.empty((n_paths, grid.n_steps + 1, d))
    out[:, 0] = x0
    dt = grid.dt
    states = np.array(x0, copy=True)
    for k in range(grid.n_steps):
        dB = rng.normal(0.0, np.sqrt(dt), size=(n_paths, d))
        states = em_step(states, coeffs, dt, dB)
        if not np.isfinite(states).all():
            raise PathBlowupError(f"nonfinite state at step {k + 1}")
        out[:, k + 1] = states
    return out


def simulate_xi(x0: Array, coeffs: DerivedCoefficients, grid: TimeGrid,
                rng: np.random.Generator, seed_info: tuple | None = None) -> SamplePath:
    """Simulate a single auxiliary-diffusion path."""
    states = simulate_xi_batch(x0, coeffs, grid, 1, rng)[0]
    return SamplePath(grid=grid, states=states, seed_info=seed_info)


def simulate_signal_and_observation(
    model: FilteringModel,
    grid: TimeGrid,
    rng: np.random.Generator,
    x0: Array | None = None,
) -> tuple[SamplePath, ObservationPath]:
    """Simulate the signal and its observation under the physical measure.

    The observation increment over a step is ``h(X_k) dt + dW_k`` with W
    independent of the signal noise.  ``x0`` fixes the initial state; when
    omitted the model's initial sampler draws it.
    """
    d = model.dim
    if x0 is None:
        if model.initial_sampler is None:
            raise ValueError("model has no initial sampler; pass x0 explicitly")
        x0 = model.initial_sampler(rng, 1)[0]
    x0 = np.atleast_1d(np.asarray(x0, float))
    dt = grid.dt
    states = np.empty((grid.n_steps + 1, d))
    states[0] = x0
    obs_inc = np.empty(grid.n_steps)
    x = np.array(x0, copy=True)
    for k in range(grid.n_steps):
        dB = rng.normal(0.0, np.sqrt(dt), size=d)
        dW = rng.normal(0.0, np.sqrt(dt))
        h_val = float(np.asarray(model.sensor(x[None, :]), float)[0])
        obs_inc[k] = h_val * dt + dW
        drift = np.asarray(model.drift(x[None, :]), float)[0]
        sig = np.asarray(model.diffusion(x[None, :]), float)[0]
        x = x + drift * dt + sig @ dB
        if not np.isfinite(x).all():
            raise PathBlowupError(f"nonfinite signal state at step {k + 1}")
        states[k + 1] = x
    return (SamplePath(grid=grid, states=states),
            ObservationPath.from_increments(grid, obs_inc))


def sample_observation_p1(grid: TimeGrid, rng: np.random.Generator) -> ObservationPath:
    """Observation path under the reference measure: a pure Brownian path.

    This is the sampler behind every error estimate of the main bound.
    """
    return ObservationPath.from_increments(grid, sample_brownian(grid, 1, rng)[:, 0])


def sample_observation_p1_batch(grid: TimeGrid, n_paths: int,
                                rng: np.random.Generator) -> Array:
    """Increments of ``n_paths`` reference-measure observation paths."""
    return rng.normal(0.0, np.sqrt(grid.dt), size=(n_paths, grid.n_steps))


def pathwise_ito_integral(f_values: Array, obs: ObservationPath) -> float | Array:
    """Left-endpoint stochastic integral ``sum_k f_k (Y_{k+1} - Y_k)``.

    ``f_values`` holds the integrand value on each interval ``[t_k, t_{k+1})``
    along the last axis; leading axes broadcast.
    """
    f_values = np.asarray(f_values, float)
    if f_values.shape[-1] != obs.grid.n_steps:
        raise ValueError(
            f"integrand has {f_values.shape[-1]} values, grid has {obs.grid.n_steps} steps")
    out = np.add.reduce(f_values * obs.increments, axis=-1)
    return float(out) if out.ndim == 0 else out
