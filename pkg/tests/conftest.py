import numpy as np
import pytest

from pnp_autotune import (
    ForwardOperator,
    KSpaceData,
    add_noise,
    apply_forward,
    generate_cartesian_mask,
    generate_coil_maps,
    generate_phantom,
)


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def small_problem(size=16, coils=2, acceleration=2.0, acs=4, snr_db=20.0, seed=0, kind="ellipse-phantom"):
    """Phantom, operator and noisy data on a small grid.

    Coils are rotated off the axes so that A^H A is not a projection.
    """
    x = generate_phantom(size, size, kind)
    maps = generate_coil_maps(size, size, coils, rotation=np.pi / 4)
    mask = generate_cartesian_mask(size, acceleration, acs, seed)
    op = ForwardOperator(maps, mask)
    y = add_noise(apply_forward(op, x), snr_db, seed)
    return x, op, y


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def problem16():
    return small_problem()


def scalar_operator():
    """A = [1] on a 1x1 image with one coil: N = C = M = 1."""
    from pnp_autotune import SamplingMask

    return ForwardOperator(np.ones((1, 1, 1), dtype=complex), SamplingMask(1, (0,)))


def scalar_data(value, sigma_sq=0.0):
    return KSpaceData(np.full((1, 1, 1), value, dtype=complex), sigma_sq)
