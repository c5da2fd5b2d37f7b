import numpy as np
import pytest

from cdjp.fock import build_operators, ket_to_dm


def random_ket(rng, n, support=None):
    """Random pure state confined to the lowest ``support`` levels."""
    support = support or n
    psi = np.zeros(n, dtype=complex)
    psi[:support] = rng.normal(size=support) + 1j * rng.normal(size=support)
    return psi / np.linalg.norm(psi)


def random_hermitian(rng, n, scale=1.0, support=None):
    support = support or n
    a = np.zeros((n, n), dtype=complex)
    b = rng.normal(size=(support, support)) + 1j * rng.normal(size=(support, support))
    a[:support, :support] = scale * 0.5 * (b + b.conj().T)
    return a


def gauged_costate(rng, rho, scale=0.3, support=None):
    """Identity plus a random Hermitian perturbation, shifted so ``Tr(σρ) = 1``."""
    n = rho.shape[0]
    s = np.eye(n, dtype=complex) + random_hermitian(rng, n, scale, support)
    return s + (1.0 - np.trace(s @ rho).real) * np.eye(n)


def random_pair(rng, n, support=None, scale=0.3):
    rho = ket_to_dm(random_ket(rng, n, support))
    return rho, gauged_costate(rng, rho, scale, support)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ops36():
    return build_operators(36)


@pytest.fixture(scope="session")
def ops12():
    return build_operators(12)
