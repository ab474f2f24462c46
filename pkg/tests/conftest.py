import numpy as np
import pytest

from zakai_smalltime import model


@pytest.fixture(scope="session")
def ou_tanh():
    return model.get_model("ou-tanh")


@pytest.fixture(scope="session")
def ou_tanh_coeffs(ou_tanh):
    return model.derive_coefficients(ou_tanh)


def make_model_1d(b, sigma, h, u0, **kwargs):
    """Assemble a d=1 model from scalar callables acting on x[..., 0]."""

    def drift(x):
        z = np.asarray(x, float)[..., 0]
        return np.asarray(b(z), float)[..., None] * np.ones_like(x)

    def diffusion(x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (1, 1))
        out[..., 0, 0] = sigma(x[..., 0])
        return out

    def sensor(x):
        z = np.asarray(x, float)[..., 0]
        return np.asarray(h(z), float) * np.ones_like(z)

    def initial_density(x):
        z = np.asarray(x, float)[..., 0]
        return np.asarray(u0(z), float) * np.ones_like(z)

    return model.FilteringModel(dim=1, drift=drift, diffusion=diffusion,
                                sensor=sensor, initial_density=initial_density,
                                **kwargs)
