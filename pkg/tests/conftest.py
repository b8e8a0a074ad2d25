import numpy as np
import pytest


def rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rand_hermitian(rng, n):
    z = rand_complex(rng, n, n)
    return (z + z.conj().T) / 2.0


def rand_psd(rng, n, ridge=0.0):
    z = rand_complex(rng, n, n)
    return z @ z.conj().T + ridge * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
