import numpy as np
import pytest

from cdjp.costate import (
    anticomm, costate_rhs, costate_rhs_general, optimal_readout_general, stochastic_hamiltonian,
)
from cdjp.errors import GaugeViolation
from cdjp.fock import build_operators, hamiltonian, hermiticity_residual, ket_to_dm, make_state, quadratures
from cdjp.qubit import bloch_hamiltonian, density_from_bloch, from_bloch

from conftest import gauged_costate, random_pair


def test_identity_costate_gives_plain_readout(ops12):
    rho = make_state("coherent", 12, alpha=0.4 - 0.2j)
    L, _ = quadratures(ops12, 0.3)
    r = optimal_readout_general(rho, np.eye(12), L)
    assert r == pytest.approx(np.trace(L @ rho).real, abs=1e-14)
    drho, dsig = costate_rhs(rho, np.eye(12, dtype=complex), r, 0.3, 0.1, 0.0, 15.0, ops12)
    # σ = 1 carries no optimal noise; its derivative has zero expectation
    assert abs(np.trace(rho @ dsig)) < 1e-13


def test_measurement_eigenstate_is_stationary():
    ops = build_operators(10)
    L, _ = quadratures(ops, 0.0)
    w, v = np.linalg.eigh(L)
    rho = np.outer(v[:, 2], v[:, 2].conj())
    drho, _ = costate_rhs_general(rho, np.eye(10, dtype=complex), np.zeros((10, 10)), L, 15.0)
    assert np.max(np.abs(drho)) < 1e-12


def test_gauge_is_conserved_and_outputs_hermitian(rng):
    ops = build_operators(8)
    for _ in range(10):
        rho, sigma = random_pair(rng, 8, support=8)
        H = hamiltonian(ops, 0.1, 0.02)
        L, _ = quadratures(ops, rng.uniform(-1, 1))
        drho, dsig = costate_rhs_general(rho, sigma, H, L, 15.0)
        assert hermiticity_residual(drho) < 1e-12 and hermiticity_residual(dsig) < 1e-12
        assert abs(np.trace(drho @ sigma + rho @ dsig)) < 1e-12


def test_gauge_violation_raised(ops12):
    rho = make_state("coherent", 12, alpha=0.3)
    with pytest.raises(GaugeViolation):
        costate_rhs(rho, 2 * np.eye(12, dtype=complex), 0.0, 0.0, 0.0, 0.0, 15.0, ops12)


def test_readout_from_explicit_omega(rng):
    ops = build_operators(8)
    rho, sigma = random_pair(rng, 8, support=8)
    L, _ = quadratures(ops, 0.7)
    omega = 0.5 * anticomm(rho, sigma)
    assert optimal_readout_general(rho, sigma, L) == pytest.approx(np.trace(L @ omega).real, abs=1e-12)


def test_qnd_readout_is_constant(rng):
    # H = f(X) commutes with L = X at θ = 0, so the optimal readout does not move
    ops = build_operators(12)
    L = ops.x
    H = 0.7 * ops.x2 + 0.3 * ops.x3 + 0.2 * ops.x
    for _ in range(5):
        rho, sigma = random_pair(rng, 12, support=6)
        drho, dsig = costate_rhs_general(rho, sigma, H, L, 15.0)
        dr = 0.5 * np.trace(anticomm(L, sigma) @ drho).real + 0.5 * np.trace(anticomm(L, dsig) @ rho).real
        assert abs(dr) < 1e-10


def test_qubit_bloch_route_matches_operator_route(rng):
    worst = 0.0
    for _ in range(100):
        q = rng.normal(size=3)
        q *= rng.uniform(0, 1) / np.linalg.norm(q)
        lam0, lam = rng.normal(), rng.normal(size=3)
        h0, h = rng.normal(), rng.normal(size=3)
        l0, l = rng.normal(), rng.normal(size=3)
        r, tau = rng.normal(), rng.uniform(0.5, 20)
        op = stochastic_hamiltonian(density_from_bloch(q), from_bloch(lam0, lam), r, from_bloch(h0, h),
                                    from_bloch(l0, l), tau)
        worst = max(worst, abs(op - bloch_hamiltonian(lam, q, r, h, l0, l, tau)))
    assert worst < 1e-12


def test_gauged_costate_helper(rng):
    rho = ket_to_dm(np.eye(6)[0].astype(complex))
    s = gauged_costate(rng, rho)
    assert np.trace(s @ rho).real == pytest.approx(1.0, abs=1e-14)
