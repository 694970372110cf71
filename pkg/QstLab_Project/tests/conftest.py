import os

import hypothesis
import numpy as np
import pytest

from tomography import qcore

np.seterr(all='warn')

# factories below are stateless, so sharing them across examples is safe
_FIXTURES_OK = [hypothesis.HealthCheck.function_scoped_fixture]

hypothesis.settings.register_profile('fast', max_examples=10, deadline=None, suppress_health_check=_FIXTURES_OK)
hypothesis.settings.register_profile('dev', max_examples=40, deadline=None, suppress_health_check=_FIXTURES_OK)
hypothesis.settings.register_profile('thorough', max_examples=400, deadline=None,
                                     suppress_health_check=_FIXTURES_OK)
hypothesis.settings.load_profile(os.environ.get('HYPOTHESIS_PROFILE', 'dev'))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_unitary():
    """ Haar unitary of a given size, QR of a complex Gaussian with the phases of R removed """

    def draw(size: int, rng: np.random.Generator) -> np.ndarray:
        z = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / np.sqrt(2)
        q, r = np.linalg.qr(z)
        phases = np.diagonal(r) / np.abs(np.diagonal(r))
        return q * phases

    return draw


@pytest.fixture
def random_hermitian():
    def draw(size: int, rng: np.random.Generator) -> np.ndarray:
        a = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
        return (a + a.conj().T) / 2

    return draw


@pytest.fixture
def random_factor():
    def draw(dim: int, rank: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))

    return draw


@pytest.fixture
def noiseless_instance():
    """ (strings, U*, rho*, exact observables) for a random low-rank state """

    def build(n: int, r: int, K: int, rng: np.random.Generator):
        truth, rho = qcore.random_low_rank_state(n, r, rng)
        strings = qcore.random_pauli_strings(n, K, rng)
        y = np.array([np.vdot(qcore.pauli_dense(s), rho.matrix).real for s in strings])
        return strings, truth, rho, y

    return build
