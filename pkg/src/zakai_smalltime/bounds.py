"""Explicit constants and inequalities of the small-time error analysis.

Everything here is a pure scalar function: the Gaussian Lq-norm factor
``kappa``, the error-bound prefactor ``constant_C``, the exponential-
martingale comparison bound ``lemma_bound`` together with its exact q = 2
left-hand side for step functions, the second-moment increment bound for
the auxiliary diffusion, and the closed form of the double time integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .model import ModelConstants

Array = np.ndarray

_HOLDER_TOL = 1e-12


@dataclass(frozen=True)
class TheoremParams:
    """Parameters of the error bound: norm order q, Holder split, horizon, ball."""

    q: float
    q1: float
    q2: float
    T: float
    K: float
    constants: ModelConstants

    def __post_init__(self):
        if self.q < 1 or self.q1 < 1 or self.q2 < 1:
            raise ValueError(f"q, q1, q2 must all be >= 1: {self.q}, {self.q1}, {self.q2}")
        gap = abs(1.0 / self.q1 + 1.0 / self.q2 - 1.0 / self.q)
        if gap > _HOLDER_TOL:
            raise ValueError(
                f"Holder identity violated: 1/{self.q1} + 1/{self.q2} != 1/{self.q} "
                f"(gap {gap:.2e})")
        if not (0.0 < self.T < 1.0):
            raise ValueError(f"T must lie in (0, 1), got {self.T}")
        if self.K <= 0:
            raise ValueError(f"K must be positive, got {self.K}")


def symmetric_split(q: float) -> tuple[float, float]:
    """Canonical Holder split q1 = q2 = 2q."""
    return 2.0 * q, 2.0 * q


def kappa(q2: float) -> float:
    """Lq norm of a standard Gaussian: sqrt(2) * (Gamma((q+1)/2)/sqrt(pi))^(1/q)."""
    if q2 < 1:
        raise ValueError(f"order must be >= 1, got {q2}")
    return math.sqrt(2.0) * math.exp(
        (gammaln((q2 + 1.0) / 2.0) - 0.5 * math.log(math.pi)) / q2)


def constant_C_terms(p: TheoremParams) -> dict[str, float]:
    """The multiplicative factors of the error constant, by name."""
    c = p.constants
    exponent = p.T * (c.c_inf + 0.5 * (p.q1 - 1.0) * c.h_inf**2
                      + math.sqrt(c.M) + 0.5 * c.M)
    return {
        "prefactor": 2.0 / math.sqrt(3.0),
        "u0_sup": c.u0_inf,
        "exp_term": math.exp(exponent),
        "gaussian_norm_term": kappa(p.q2) + math.sqrt(p.T) * c.h_inf,
        "lipschitz": c.L,
        "ball_term": math.sqrt(2.0 * (1.0 + p.K**2) * (1.0 + p.T)),
    }


def constant_C(p: TheoremParams) -> float:
    """Error-bound prefactor: the error at horizon T is at most C * T."""
    terms = constant_C_terms(p)
    out = 1.0
    for v in terms.values():
        out *= v
    return out


def optimize_holder_split(q: float, T: float, K: float,
                          constants: ModelConstants) -> TheoremParams:
    """Minimize the error constant over admissible Holder splits.

    Parametrized by u = q/q1 in (0, 1) so that q2 = q/(1-u); both exponents
    stay >= q >= 1 automatically.
    """

    def objective(u: float) -> float:
        p = TheoremParams(q=q, q1=q / u, q2=q / (1.0 - u), T=T, K=K,
                          constants=constants)
        return constant_C(p)

    res = minimize_scalar(objective, bounds=(1e-6, 1.0 - 1e-6), method="bounded",
                          options={"xatol": 1e-10})
    u = float(res.x)
    return TheoremParams(q=q, q1=q / u, q2=q / (1.0 - u), T=T, K=K, constants=constants)


def lemma_bound(f_sup: float, g_sup: float, f_minus_g_l2: float, T: float,
                q1: float, q2: float) -> float:
    """Upper bound for the Lq distance of two exponential martingales.

    For bounded deterministic integrands f, g on [0, T]:
    (e^{(q1-1)/2 T |f|_inf^2} + e^{(q1-1)/2 T |g|_inf^2})
    * (kappa(q2) + (sqrt(T)/2)(|f|_inf + |g|_inf)) * |f - g|_2.
    """
    if min(f_sup, g_sup, f_minus_g_l2) < 0:
        raise ValueError("norms must be nonnegative")
    exps = (math.exp(0.5 * (q1 - 1.0) * T * f_sup**2)
            + math.exp(0.5 * (q1 - 1.0) * T * g_sup**2))
    mid = kappa(q2) + 0.5 * math.sqrt(T) * (f_sup + g_sup)
    return exps * mid * f_minus_g_l2


def step_l2_products(f_vals: Array, g_vals: Array, T: float) -> tuple[float, float, float]:
    """(|f|_2^2, |g|_2^2, <f, g>) for step functions on a shared uniform grid."""
    f_vals = np.asarray(f_vals, float)
    g_vals = np.asarray(g_vals, float)
    if f_vals.shape != g_vals.shape or f_vals.ndim != 1:
        raise ValueError("step functions must share one uniform grid")
    dt = T / f_vals.shape[0]
    ff = float(np.add.reduce(f_vals * f_vals) * dt)
    gg = float(np.add.reduce(g_vals * g_vals) * dt)
    fg = float(np.add.reduce(f_vals * g_vals) * dt)
    return ff, gg, fg


def lemma_lhs_exact_q2(f_vals: Array, g_vals: Array, T: float) -> float:
    """Exact L2 distance of the two exponential martingales (step integrands).

    Gaussian moment identities give
    ``sqrt(e^{|f|_2^2} + e^{|g|_2^2} - 2 e^{<f,g>})``.
    """
    ff, gg, fg = step_l2_products(f_vals, g_vals, T)
    inner = math.exp(ff) + math.exp(gg) - 2.0 * math.exp(fg)
    return math.sqrt(max(inner, 0.0))


def moment_increment_bound(x_norm: float, L: float, M: float, T: float,
                           s: float, r: float) -> float:
    """Bound on E |h(xi_{T-s}) - h(xi_r)|^2 for the auxiliary diffusion.

    ``2 L^2 (1 + |x|^2)(1 + T) e^{2(sqrt(M) + M/2) T} |T - s - r|``.
    """
    if not (0.0 <= s <= T and 0.0 <= r <= T):
        raise ValueError(f"times must lie in [0, T]: s={s}, r={r}, T={T}")
    return (2.0 * L**2 * (1.0 + x_norm**2) * (1.0 + T)
            * math.exp(2.0 * (math.sqrt(M) + 0.5 * M) * T) * abs(T - s - r))


def double_integral_identity(T: float) -> float:
    """Closed form sqrt( int_0^T (1/T) int_0^T |T - s - r| dr ds ) = T / sqrt(3)."""
    if T < 0:
        raise ValueError(f"T must be nonnegative, got {T}")
    return T / math.sqrt(3.0)
