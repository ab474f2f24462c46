"""Small-time approximation of the unnormalized filtering density.

The library ties together four pieces:

* ``model`` -- filtering problem definitions (drift, diffusion, sensor,
  initial density) and the derived adjoint coefficients and constants.
* ``paths`` / ``fk`` -- seeded Brownian drivers, Euler-Maruyama simulation
  of the auxiliary diffusion and Feynman-Kac Monte Carlo estimators.
* ``kolmogorov_pde`` -- deterministic grid solvers (d=1): the degenerate
  transport-diffusion equation for v(t, x, y) and a splitting-up reference
  solver for the filtering density driven by an observation path.
* ``bounds`` / ``experiments`` -- the explicit error constants, inequality
  oracles, and the empirical convergence-rate harness with its CLI.
"""

from . import bounds, experiments, fk, kolmogorov_pde, model, paths

__all__ = [
    "bounds",
    "experiments",
    "fk",
    "kolmogorov_pde",
    "model",
    "paths",
]

__version__ = "0.1.0"
