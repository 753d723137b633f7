import numpy as np
import pytest

from dpmag import build_spin_operators, coherent_state_x


@pytest.fixture(scope="session")
def ops_cache():
    cache = {}

    def get(F):
        if F not in cache:
            cache[F] = build_spin_operators(F)
        return cache[F]

    return get


@pytest.fixture(scope="session")
def coherent_cache(ops_cache):
    cache = {}

    def get(F):
        if F not in cache:
            cache[F] = coherent_state_x(ops_cache(F))
        return cache[F].copy()

    return get


def random_density_matrix(dim, rng):
    """Full-rank random state for property checks."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (a + a.conj().T)


def rotate_about_y(ops, rho, angle):
    """Exact e^{i angle fy} rho e^{-i angle fy} via the fy eigenbasis."""
    w, v = np.linalg.eigh(ops.fy)
    u = (v * np.exp(1j * angle * w)) @ v.conj().T
    return u @ rho @ u.conj().T
