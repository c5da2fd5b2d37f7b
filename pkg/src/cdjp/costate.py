"""Operator-level most-likely-path equations with a costate.

The state ``ρ`` follows the Stratonovich conditional master equation driven by
a smooth readout ``r``; the costate ``σ`` (gauge ``Tr(σρ) = 1``) follows the
negative adjoint of the same generator. Everything here works with generic
Hermitian ``H`` and ``L`` so the qubit and QND checks can reuse it; the
oscillator wrappers just build ``H`` and ``L_θ`` from an :class:`OperatorSet`.
"""

from __future__ import annotations

import numpy as np

from .errors import GaugeViolation
from .fock import OperatorSet, expect, hamiltonian, quadratures, symmetrize

GAUGE_TOL = 1e-6


def anticomm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a


def comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def optimal_readout_general(rho: np.ndarray, sigma: np.ndarray, L: np.ndarray) -> float:
    """``r* = ⟨L⟩ + ½⟨[ΔL, σ]_+⟩`` (reduces to ``½⟨[L, σ]_+⟩`` when ``⟨σ⟩ = 1``)."""
    mean_l = expect(L, rho).real
    mean_s = expect(sigma, rho).real
    half_anti = 0.5 * expect(anticomm(L, sigma), rho).real
    return float(mean_l + half_anti - mean_l * mean_s)


def sme_rhs_general(rho, r, H, L, tau):
    """Stratonovich drift ``-i[H,ρ] - [ΔV,ρ]_+/4τ + r[ΔL,ρ]_+/2τ``."""
    V = L @ L
    eye = np.eye(rho.shape[0])
    dV = V - expect(V, rho).real * eye
    dL = L - expect(L, rho).real * eye
    return -1j * comm(H, rho) - anticomm(dV, rho) / (4 * tau) + r * anticomm(dL, rho) / (2 * tau)


def costate_rhs_general(rho, sigma, H, L, tau, r=None, check_gauge=True):
    """Coupled ``(dρ/dt, dσ/dt)``; ``r`` defaults to the optimal readout."""
    gauge = expect(sigma, rho).real
    if check_gauge and abs(gauge - 1.0) > GAUGE_TOL:
        raise GaugeViolation(f"<sigma> = {gauge!r}, expected 1")
    if r is None:
        r = optimal_readout_general(rho, sigma, L)
    V = L @ L
    eye = np.eye(rho.shape[0])
    dV = V - expect(V, rho).real * eye
    dL = L - expect(L, rho).real * eye
    drho = -1j * comm(H, rho) - anticomm(dV, rho) / (4 * tau) + r * anticomm(dL, rho) / (2 * tau)
    dsigma = -1j * comm(H, sigma) + anticomm(dV, sigma) / (4 * tau) - r * anticomm(dL, sigma) / (2 * tau)
    return symmetrize(drho), symmetrize(dsigma)


def costate_rhs(rho, sigma, r, theta, lambda1, lambda2, tau, ops: OperatorSet, check_gauge=True):
    """Oscillator form of :func:`costate_rhs_general` for ``L_θ`` and the parametric ``H``."""
    H = hamiltonian(ops, lambda1, lambda2)
    L, _ = quadratures(ops, theta)
    return costate_rhs_general(rho, sigma, H, L, tau, r=r, check_gauge=check_gauge)


def stochastic_hamiltonian(rho, sigma, r, H, L, tau) -> float:
    """``Tr(σ F(ρ, r)) - (r² - 2r⟨L⟩ + ⟨L²⟩)/2τ``."""
    F = sme_rhs_general(rho, r, H, L, tau)
    log_p = -(r * r - 2 * r * expect(L, rho).real + expect(L @ L, rho).real) / (2 * tau)
    return float(expect(sigma, F).real + log_p)


def optimal_hamiltonian_general(rho, sigma, H, L, tau) -> float:
    """``⟨i[H,σ]⟩ + ⟨[L,σ]_+⟩²/8τ - ⟨[V,σ]_+⟩/4τ`` (gauge ``⟨σ⟩ = 1``)."""
    V = L @ L
    t1 = expect(1j * comm(H, sigma), rho).real
    t2 = expect(anticomm(L, sigma), rho).real ** 2 / (8 * tau)
    t3 = expect(anticomm(V, sigma), rho).real / (4 * tau)
    return float(t1 + t2 - t3)


def rk4_costate_step(rho, sigma, dt, H, L, tau):
    """One RK4 step of the coupled optimal-path ODE (used as an oracle)."""

    def f(r_, s_):
        return costate_rhs_general(r_, s_, H, L, tau, check_gauge=False)

    k1 = f(rho, sigma)
    k2 = f(rho + 0.5 * dt * k1[0], sigma + 0.5 * dt * k1[1])
    k3 = f(rho + 0.5 * dt * k2[0], sigma + 0.5 * dt * k2[1])
    k4 = f(rho + dt * k3[0], sigma + dt * k3[1])
    rho = rho + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    sigma = sigma + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return symmetrize(rho), symmetrize(sigma)


# ---------------------------------------------------------------------------
# trace definitions of the reduced scalars


def omega_lambda(rho, sigma):
    """``Ω = ½[ρ,σ]_+`` and ``Λ = [ρ,σ]``."""
    return 0.5 * anticomm(rho, sigma), comm(rho, sigma)


def gamma_kappa(rho, sigma, ops: OperatorSet, n: int, m: int) -> tuple[complex, complex]:
    """``Γ(n,m) = Tr(XⁿPᵐΩ)`` and ``κ(n,m) = i Tr(XⁿPᵐΛ)`` (complex in general)."""
    omega, lam = omega_lambda(rho, sigma)
    b = ops.xp_power(n, m)
    return complex(expect(b, omega)), complex(1j * expect(b, lam))


def gamma_kappa_table(rho, sigma, ops: OperatorSet, order_cap: int):
    """Complex tables ``G[n, m]``, ``K[n, m]`` for ``n + m <= order_cap``."""
    omega, lam = omega_lambda(rho, sigma)
    G = np.zeros((order_cap + 1, order_cap + 1), dtype=complex)
    K = np.zeros_like(G)
    for n in range(order_cap + 1):
        for m in range(order_cap + 1 - n):
            b = ops.xp_power(n, m)
            G[n, m] = expect(b, omega)
            K[n, m] = 1j * expect(b, lam)
    return G, K


def costate_from_bundle(rho, bundle_values, ops: OperatorSet):
    """Minimum-norm Hermitian ``σ`` with ``Tr(σρ) = 1`` reproducing a bundle.

    Every bundle entry is linear in ``σ`` for fixed ``ρ``, so this is a small
    least-squares problem over the real parameters of a Hermitian matrix.
    Returns ``None`` if the constraints cannot be met to 1e-9.
    """
    from .bundle import BUNDLE_KEYS  # local: bundle imports this module's helpers in tests

    d = rho.shape[0]
    basis = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = e[j, i] = 1 / np.sqrt(2)
            basis.append(e)
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = -1j / np.sqrt(2)
            e[j, i] = 1j / np.sqrt(2)
            basis.append(e)

    targets = {
        "g10": (1, 0, "G"), "g01": (0, 1, "G"), "k10": (1, 0, "K"), "k01": (0, 1, "K"),
        "g20": (2, 0, "G"), "g11t": (1, 1, "G"), "g02": (0, 2, "G"),
        "k20": (2, 0, "K"), "k11": (1, 1, "K"), "k02": (0, 2, "K"),
    }
    rows = []
    for key in BUNDLE_KEYS:
        n, m, kind = targets[key]
        b = ops.xp_power(n, m)
        row = []
        for e in basis:
            om, la = omega_lambda(rho, e)
            row.append(expect(b, om) if kind == "G" else 1j * expect(b, la))
        rows.append(row)
    rows.append([expect(e, rho) for e in basis])
    A = np.array(rows)
    rhs = np.array(list(np.asarray(bundle_values, dtype=float)) + [1.0], dtype=complex)
    # Γ(1,1) carries the +i/2 of the shifted variable
    idx = BUNDLE_KEYS.index("g11t")
    rhs[idx] = rhs[idx] + 0.5j
    A_real = np.vstack([A.real, A.imag])
    b_real = np.concatenate([rhs.real, rhs.imag])
    coef, *_ = np.linalg.lstsq(A_real, b_real, rcond=None)
    if np.max(np.abs(A_real @ coef - b_real)) > 1e-9:
        return None
    sigma = sum(c * e for c, e in zip(coef, basis))
    return symmetrize(sigma)
