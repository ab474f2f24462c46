"""Filtering problem instances and their derived adjoint coefficients.

A :class:`FilteringModel` bundles the user-supplied coefficient callables
(drift b, diffusion sigma, sensor h, initial density u0).  All callables are
vectorized: they accept points of shape ``(..., d)`` and return arrays with
the documented trailing shape (``(..., d)`` for b, ``(..., d, d)`` for sigma,
``(...)`` for h and u0).  Derived quantities:

* ``a = sigma sigma^T``                   (diffusion covariance matrix)
* ``b_star_i = sum_j d_j a_ij - b_i``     (adjoint drift)
* ``c = 1/2 sum_ij d^2_ij a_ij - div b``  (adjoint zeroth-order coefficient)

so that ``L* f = 1/2 sum a_ij d^2_ij f + sum b*_i d_i f + c f`` is the formal
adjoint of the generator ``L f = 1/2 sum a_ij d^2_ij f + sum b_i d_i f``.

Missing analytic derivatives fall back to central finite differences with
step ``cbrt(eps) * max(1, |x|)``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

Array = np.ndarray
ScalarField = Callable[[Array], Array]
VectorField = Callable[[Array], Array]
MatrixField = Callable[[Array], Array]

_FD_REL_STEP = float(np.cbrt(np.finfo(float).eps))
# Absolute radius below which the constant-estimation shells stop nesting.
_SHELL_FLOOR = 1e-4


class ConfigurationError(ValueError):
    """A supplied coefficient is inconsistent with the declared dimension."""


@dataclass(frozen=True)
class FilteringModel:
    """Coefficients of a filtering problem.

    Optional analytic derivatives (``db``, ``da``, ``d2a``, ``dh``) speed up
    and sharpen the derived coefficients; absent ones are filled by central
    finite differences.  Index conventions:

    * ``db(x)[..., i, k] = d b_i / d x_k``
    * ``da(x)[..., i, j, k] = d a_ij / d x_k``
    * ``d2a(x)[..., i, j, k, l] = d^2 a_ij / (d x_k d x_l)``
    * ``dh(x)[..., k] = d h / d x_k``
    """

    dim: int
    drift: VectorField
    diffusion: MatrixField
    sensor: ScalarField
    initial_density: ScalarField
    y0: float = 0.0
    db: MatrixField | None = None
    da: Callable[[Array], Array] | None = None
    d2a: Callable[[Array], Array] | None = None
    dh: VectorField | None = None
    initial_sampler: Callable[[np.random.Generator, int], Array] | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.dim}")


@dataclass(frozen=True)
class DerivedCoefficients:
    """Adjoint-operator coefficients derived from a model.

    ``sigma`` is carried along because the auxiliary diffusion uses the
    adjoint drift together with the original diffusion matrix.
    """

    dim: int
    a: MatrixField
    b_star: VectorField
    c: ScalarField
    sigma: MatrixField


@dataclass(frozen=True)
class ModelConstants:
    """Scalar constants entering the error bound, estimated over a box."""

    L: float
    M: float
    h_inf: float
    u0_inf: float
    c_inf: float
    mu1: float
    mu2: float
    box_radius: float
    n_samples: int

    def __post_init__(self):
        vals = (self.L, self.M, self.h_inf, self.u0_inf, self.c_inf, self.mu1, self.mu2)
        if not all(math.isfinite(v) and v >= -1e-12 for v in vals[:5]):
            raise ConfigurationError(f"constants must be finite and nonnegative: {self}")
        if self.mu1 > self.mu2 + 1e-12:
            raise ConfigurationError(f"mu1 must not exceed mu2: {self.mu1} > {self.mu2}")


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def _fd_steps(x: Array) -> Array:
    """Per-point step for central differences, shape ``x.shape[:-1]``."""
    r = np.sqrt(np.add.reduce(np.asarray(x, float) ** 2, axis=-1))
    return _FD_REL_STEP * np.maximum(1.0, r)


def _shifted(x: Array, k: int, delta: Array) -> Array:
    out = np.array(x, dtype=float, copy=True)
    out[..., k] = out[..., k] + delta
    return out


def fd_gradient(f: ScalarField, x: Array, dim: int) -> Array:
    """Central-difference gradient of a scalar field, shape ``(..., d)``."""
    x = np.asarray(x, float)
    h = _fd_steps(x)
    cols = []
    for k in range(dim):
        cols.append((np.asarray(f(_shifted(x, k, h)), float)
                     - np.asarray(f(_shifted(x, k, -h)), float)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def fd_jacobian(b: VectorField, x: Array, dim: int) -> Array:
    """Central-difference Jacobian ``[..., i, k] = d b_i / d x_k``."""
    x = np.asarray(x, float)
    h = _fd_steps(x)
    cols = []
    for k in range(dim):
        cols.append((np.asarray(b(_shifted(x, k, h)), float)
                     - np.asarray(b(_shifted(x, k, -h)), float)) / (2.0 * h[..., None]))
    return np.stack(cols, axis=-1)


def _fd_matrix_grad(a: MatrixField, x: Array, dim: int) -> Array:
    """``[..., i, j, k] = d a_ij / d x_k`` by central differences."""
    x = np.asarray(x, float)
    h = _fd_steps(x)
    cols = []
    for k in range(dim):
        cols.append((np.asarray(a(_shifted(x, k, h)), float)
                     - np.asarray(a(_shifted(x, k, -h)), float)) / (2.0 * h[..., None, None]))
    return np.stack(cols, axis=-1)


def _fd_matrix_hess(a: MatrixField, x: Array, dim: int) -> Array:
    """``[..., i, j, k, l] = d^2 a_ij / dx_k dx_l`` by central differences."""
    x = np.asarray(x, float)
    h = _fd_steps(x)
    hm = h[..., None, None]
    base = np.asarray(a(x), float)
    shape = base.shape + (dim, dim)
    out = np.empty(shape, dtype=float)
    for k in range(dim):
        plus = np.asarray(a(_shifted(x, k, h)), float)
        minus = np.asarray(a(_shifted(x, k, -h)), float)
        out[..., k, k] = (plus - 2.0 * base + minus) / (hm * hm)
    for k in range(dim):
        for l in range(k + 1, dim):
            pp = np.asarray(a(_shifted(_shifted(x, k, h), l, h)), float)
            pm = np.asarray(a(_shifted(_shifted(x, k, h), l, -h)), float)
            mp = np.asarray(a(_shifted(_shifted(x, k, -h), l, h)), float)
            mm = np.asarray(a(_shifted(_shifted(x, k, -h), l, -h)), float)
            mixed = (pp - pm - mp + mm) / (4.0 * hm * hm)
            out[..., k, l] = mixed
            out[..., l, k] = mixed
    return out


# ---------------------------------------------------------------------------
# derived coefficients
# ---------------------------------------------------------------------------

def derive_diffusion_matrix(model: FilteringModel) -> MatrixField:
    """Return ``a(x) = sigma(x) sigma(x)^T`` with output-shape validation."""
    d = model.dim

    def a(x: Array) -> Array:
        x = np.asarray(x, float)
        s = np.asarray(model.diffusion(x), float)
        want = x.shape[:-1] + (d, d)
        if s.shape != want:
            raise ConfigurationError(
                f"diffusion output shape {s.shape} does not match expected {want}")
        return np.einsum("...ik,...jk->...ij", s, s)

    return a


def derive_adjoint_drift(model: FilteringModel, a: MatrixField) -> VectorField:
    """Adjoint drift ``b*_i = sum_j d_j a_ij - b_i``."""
    d = model.dim

    def b_star(x: Array) -> Array:
        x = np.asarray(x, float)
        da = model.da(x) if model.da is not None else _fd_matrix_grad(a, x, d)
        div_a = np.einsum("...ijj->...i", np.asarray(da, float))
        return div_a - np.asarray(model.drift(x), float)

    return b_star


def derive_zeroth_order(model: FilteringModel, a: MatrixField) -> ScalarField:
    """Zeroth-order adjoint coefficient ``c = 1/2 sum_ij d^2_ij a_ij - div b``."""
    d = model.dim

    def c(x: Array) -> Array:
        x = np.asarray(x, float)
        d2a = model.d2a(x) if model.d2a is not None else _fd_matrix_hess(a, x, d)
        term_a = 0.5 * np.einsum("...ijij->...", np.asarray(d2a, float))
        db = model.db(x) if model.db is not None else fd_jacobian(model.drift, x, d)
        return term_a - np.einsum("...ii->...", np.asarray(db, float))

    return c


def derive_coefficients(model: FilteringModel) -> DerivedCoefficients:
    """Derive all adjoint-operator coefficients for a model."""
    a = derive_diffusion_matrix(model)
    return DerivedCoefficients(
        dim=model.dim,
        a=a,
        b_star=derive_adjoint_drift(model, a),
        c=derive_zeroth_order(model, a),
        sigma=lambda x: np.asarray(model.diffusion(np.asarray(x, float)), float),
    )


# ---------------------------------------------------------------------------
# constant estimation
# ---------------------------------------------------------------------------

def sample_box_points(dim: int, radius: float, n_samples: int, seed: int) -> Array:
    """Deterministic multi-scale sample cloud inside the box ``[-R, R]^d``.

    Points are a fixed unit cloud replicated on dyadic shells ``R * 2^-k``
    down to an absolute floor, plus the origin.  Doubling the radius only
    adds an outer shell, so any supremum estimated over these points is
    monotone under box doubling by construction.
    """
    if radius <= 0:
        raise ConfigurationError(f"box radius must be positive, got {radius}")
    if n_samples < 1000:
        raise ConfigurationError(f"need at least 1000 samples, got {n_samples}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    cloud = rng.uniform(-1.0, 1.0, size=(max(32, n_samples // 16), dim))
    shells = []
    r = float(radius)
    while r >= _SHELL_FLOOR:
        shells.append(r * cloud)
        r *= 0.5
    shells.append(np.zeros((1, dim)))
    return np.concatenate(shells, axis=0)


def _check_finite(name: str, values: Array, points: Array) -> None:
    bad = ~np.isfinite(values)
    while bad.ndim > 1:
        bad = bad.any(axis=-1)
    if bad.any():
        idx = int(np.argmax(bad))
        raise ConfigurationError(
            f"nonfinite {name} evaluation at x={points[idx].tolist()}")


def estimate_constants(
    model: FilteringModel,
    coeffs: DerivedCoefficients,
    box_radius: float,
    n_samples: int = 4096,
    seed: int = 0,
    overrides: Mapping[str, float] | None = None,
) -> ModelConstants:
    """Estimate the scalar constants of the error bound over a box.

    ``L``      -- sup of ``|grad h|`` (Lipschitz constant of the sensor);
    ``M``      -- sup of ``max(|a|_F^2, |b*|) / (1 + |x|^2)``;
    ``h_inf``, ``u0_inf``, ``c_inf`` -- sups of the absolute values;
    ``mu1``, ``mu2``  -- extreme eigenvalues of ``a(x)`` over the samples.

    Deterministic given the seed.  Any entry may be overridden with an
    analytic value via ``overrides``.
    """
    pts = sample_box_points(model.dim, box_radius, n_samples, seed)

    h_vals = np.asarray(model.sensor(pts), float)
    _check_finite("sensor", h_vals, pts)
    u0_vals = np.asarray(model.initial_density(pts), float)
    _check_finite("initial density", u0_vals, pts)
    c_vals = np.asarray(coeffs.c(pts), float)
    _check_finite("zeroth-order coefficient", c_vals, pts)
    a_vals = np.asarray(coeffs.a(pts), float)
    _check_finite("diffusion matrix", a_vals, pts)
    b_star_vals = np.asarray(coeffs.b_star(pts), float)
    _check_finite("adjoint drift", b_star_vals, pts)

    grad_h = (np.asarray(model.dh(pts), float) if model.dh is not None
              else fd_gradient(model.sensor, pts, model.dim))
    _check_finite("sensor gradient", grad_h, pts)

    sq_norm = np.add.reduce(pts**2, axis=-1)
    a_frob_sq = np.add.reduce(a_vals.reshape(len(pts), -1) ** 2, axis=-1)
    b_star_norm = np.sqrt(np.add.reduce(b_star_vals**2, axis=-1))
    growth = np.maximum(a_frob_sq, b_star_norm) / (1.0 + sq_norm)

    eigs = np.linalg.eigvalsh(a_vals)

    values = {
        "L": float(np.sqrt(np.add.reduce(grad_h**2, axis=-1)).max()),
        "M": float(growth.max()),
        "h_inf": float(np.abs(h_vals).max()),
        "u0_inf": float(np.abs(u0_vals).max()),
        "c_inf": float(np.abs(c_vals).max()),
        "mu1": float(eigs.min()),
        "mu2": float(eigs.max()),
    }
    if overrides:
        unknown = set(overrides) - set(values)
        if unknown:
            raise ConfigurationError(f"unknown constant overrides: {sorted(unknown)}")
        values.update({k: float(v) for k, v in overrides.items()})
    return ModelConstants(box_radius=float(box_radius), n_samples=int(n_samples), **values)


def with_overrides(constants: ModelConstants, **values: float) -> ModelConstants:
    """Return a copy of ``constants`` with selected entries replaced."""
    return dataclasses.replace(constants, **values)


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

def gaussian_density_1d(mean: float, var: float) -> ScalarField:
    """Normalized Gaussian density on the line as a vectorized callable."""
    norm = 1.0 / math.sqrt(2.0 * math.pi * var)

    def u0(x: Array) -> Array:
        z = np.asarray(x, float)[..., 0]
        return norm * np.exp(-((z - mean) ** 2) / (2.0 * var))

    return u0


def _const_sigma_1d(s: float) -> MatrixField:
    def sigma(x: Array) -> Array:
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (1, 1))
        out[..., 0, 0] = s
        return out

    return sigma


def _zero_tensor(rank: int):
    def deriv(x: Array) -> Array:
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (1,) * rank)

    return deriv


_REGISTRY: dict[str, Callable[..., FilteringModel]] = {}


def register_model(name: str):
    def wrap(factory):
        _REGISTRY[name] = factory
        return factory

    return wrap


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def get_model(name: str, **overrides) -> FilteringModel:
    """Instantiate a registered model; keyword overrides adjust parameters."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown model {name!r}; available: {available_models()}") from None
    return factory(**overrides)


def _mean_reverting_1d(name: str, sensor: ScalarField, dh: VectorField,
                       rate: float, sigma: float, u0_mean: float, u0_var: float,
                       y0: float) -> FilteringModel:
    def drift(x: Array) -> Array:
        return -rate * np.asarray(x, float)

    def db(x: Array) -> Array:
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (1, 1))
        out[..., 0, 0] = -rate
        return out

    def sample_initial(rng: np.random.Generator, n: int) -> Array:
        return u0_mean + math.sqrt(u0_var) * rng.standard_normal((n, 1))

    return FilteringModel(
        dim=1,
        drift=drift,
        diffusion=_const_sigma_1d(sigma),
        sensor=sensor,
        initial_density=gaussian_density_1d(u0_mean, u0_var),
        y0=y0,
        db=db,
        da=_zero_tensor(3),
        d2a=_zero_tensor(4),
        dh=dh,
        initial_sampler=sample_initial,
        name=name,
    )


@register_model("ou-tanh")
def ou_tanh(rate: float = 1.0, sigma: float = 1.0, u0_mean: float = 0.0,
            u0_var: float = 0.25, y0: float = 0.0) -> FilteringModel:
    """Mean-reverting signal with bounded tanh sensor (the main test model)."""

    def sensor(x: Array) -> Array:
        return np.tanh(np.asarray(x, float)[..., 0])

    def dh(x: Array) -> Array:
        z = np.asarray(x, float)[..., 0]
        return (1.0 / np.cosh(z) ** 2)[..., None]

    return _mean_reverting_1d("ou-tanh", sensor, dh, rate, sigma, u0_mean, u0_var, y0)


@register_model("const-h")
def const_h(level: float = 0.5, rate: float = 1.0, sigma: float = 1.0,
            u0_mean: float = 0.0, u0_var: float = 0.25, y0: float = 0.0) -> FilteringModel:
    """Constant sensor: the approximation is exact up to discretization."""

    def sensor(x: Array) -> Array:
        x = np.asarray(x, float)
        return np.full(x.shape[:-1], float(level))

    return _mean_reverting_1d("const-h", sensor, _zero_tensor(1),
                              rate, sigma, u0_mean, u0_var, y0)


@register_model("zero-h")
def zero_h(rate: float = 1.0, sigma: float = 1.0, u0_mean: float = 0.0,
           u0_var: float = 0.25, y0: float = 0.0) -> FilteringModel:
    """No observation coupling at all; both solvers reduce to the same PDE."""

    def sensor(x: Array) -> Array:
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1])

    return _mean_reverting_1d("zero-h", sensor, _zero_tensor(1),
                              rate, sigma, u0_mean, u0_var, y0)


@register_model("kalman")
def kalman(rate: float = 1.0, sigma: float = 1.0, gain: float = 1.0,
           u0_mean: float = 1.0, u0_var: float = 0.25, y0: float = 0.0) -> FilteringModel:
    """Linear-Gaussian model with linear (unbounded!) sensor.

    Violates the boundedness assumption behind the error bound; shipped only
    to validate the splitting solver against the closed-form linear filter.
    """

    def sensor(x: Array) -> Array:
        return gain * np.asarray(x, float)[..., 0]

    def dh(x: Array) -> Array:
        x = np.asarray(x, float)
        return np.full(x.shape[:-1] + (1,), float(gain))

    return _mean_reverting_1d("kalman", sensor, dh, rate, sigma, u0_mean, u0_var, y0)
