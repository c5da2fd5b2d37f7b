"""Reduced scalar system for quadrature measurement of a parametric oscillator.

For ``H = ½(X² + P²) + λ1 X²`` and ``L_θ = cosθ X + sinθ P`` the optimal path of
``(ρ, σ)`` closes on ten real scalars built from ``Ω = ½[ρ,σ]_+`` and
``Λ = [ρ,σ]``::

    Γ(n,m) = Tr(XⁿPᵐ Ω),   κ(n,m) = i Tr(XⁿPᵐ Λ)

up to second order, with ``Γ̃(1,1) = Γ(1,1) - i/2`` real. This module holds
that system, the control laws that maximize the control Hamiltonian, its
supremum value ``K``, and the general-order recurrences built on McCoy's
ordering formula (which also carry a cubic ``λ2 X³`` term).
"""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from math import factorial

import numpy as np

from .errors import AnharmonicNotClosed

BUNDLE_KEYS = ("g10", "g01", "k10", "k01", "g20", "g11t", "g02", "k20", "k11", "k02")
THETA_HOLD_TOL = 1e-12


@dataclass(frozen=True)
class ScalarBundle:
    """The ten reduced variables; ``g11t`` is the shifted ``Γ(1,1) - i/2``."""

    g10: float = 0.0
    g01: float = 0.0
    k10: float = 0.0
    k01: float = 0.0
    g20: float = 0.0
    g11t: float = 0.0
    g02: float = 0.0
    k20: float = 0.0
    k11: float = 0.0
    k02: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "ScalarBundle":
        values = np.asarray(values, dtype=float)
        if values.shape != (10,):
            raise ValueError(f"expected 10 values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("bundle entries must be finite")
        return cls(*map(float, values))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def bundle_from_moments(mean_x, mean_p, var_x, cov, var_p) -> ScalarBundle:
    """Bundle of the ``σ = 𝟙`` point: ``Γ`` equals raw moments and ``κ = 0``.

    ``Γ̃(1,1) = ⟨XP⟩ - i/2 = Cov + ⟨X⟩⟨P⟩`` because ``⟨XP⟩ = ⟨½[X,P]_+⟩ + i/2``.
    """
    return ScalarBundle(
        g10=mean_x, g01=mean_p,
        g20=var_x + mean_x**2, g11t=cov + mean_x * mean_p, g02=var_p + mean_p**2,
    )


def bundle_from_states(rho, sigma, ops) -> ScalarBundle:
    """Trace definitions of the ten scalars for a given ``(ρ, σ)``."""
    from .costate import gamma_kappa_table

    G, K = gamma_kappa_table(rho, sigma, ops, 2)
    return ScalarBundle(
        g10=G[1, 0].real, g01=G[0, 1].real, k10=K[1, 0].real, k01=K[0, 1].real,
        g20=G[2, 0].real, g11t=(G[1, 1] - 0.5j).real, g02=G[0, 2].real,
        k20=K[2, 0].real, k11=K[1, 1].real, k02=K[0, 2].real,
    )


# ---------------------------------------------------------------------------
# control laws


def optimal_readout(bundle: ScalarBundle, theta: float) -> float:
    """``r_θ = cosθ Γ(1,0) + sinθ Γ(0,1)``."""
    return float(np.cos(theta) * bundle.g10 + np.sin(theta) * bundle.g01)


def optimal_lambda1(k20: float, lambda1_max: float) -> float:
    """Bang-bang law ``-λmax sign(κ(2,0))`` with ``sign(0) = +1``."""
    if lambda1_max < 0:
        raise ValueError("lambda1_max must be non-negative")
    return -lambda1_max if k20 > 0 else lambda1_max


def theta_amplitudes(bundle: ScalarBundle) -> tuple[float, float]:
    """``(A_Γ, B_Γ)`` so that the θ-dependent part of ``K`` is ``R_Γ cos(2θ - φ_Γ)/2τ``."""
    b = bundle
    A = 0.5 * (b.g10**2 - b.g01**2 - b.g20 + b.g02)
    B = b.g10 * b.g01 - b.g11t
    return float(A), float(B)


def optimal_theta(bundle: ScalarBundle, previous: float = 0.0) -> float:
    """``½ atan2(B_Γ, A_Γ)`` in ``[-π/2, π/2]``; holds ``previous`` when ``R_Γ`` vanishes."""
    A, B = theta_amplitudes(bundle)
    if np.hypot(A, B) < THETA_HOLD_TOL:
        return float(previous)
    return float(0.5 * np.arctan2(B, A))


@dataclass(frozen=True)
class PontryaginValue:
    """Supremum of the control Hamiltonian with the normal multiplier ``p0 = -1``."""

    K: float
    p0: float = -1.0


def pontryagin_terms(bundle: ScalarBundle, lambda1_max: float, tau: float) -> np.ndarray:
    """The four additive pieces of ``K`` (bang-bang, harmonic, θ, readout-cost)."""
    b = bundle
    A, B = theta_amplitudes(b)
    return np.array([
        lambda1_max * abs(b.k20),
        -0.5 * (b.k20 + b.k02),
        np.hypot(A, B) / (2 * tau),
        (b.g10**2 + b.g01**2 - b.g20 - b.g02) / (4 * tau),
    ])


def pontryagin_value(bundle: ScalarBundle, lambda1_max: float, tau: float) -> PontryaginValue:
    """``K = λmax|κ20| - ½(κ20 + κ02) + R_Γ/2τ + (Γ10² + Γ01² - Γ20 - Γ02)/4τ``."""
    return PontryaginValue(K=float(pontryagin_terms(bundle, lambda1_max, tau).sum()))


def control_hamiltonian(bundle: ScalarBundle, theta: float, lambda1: float, tau: float) -> float:
    """Control Hamiltonian at arbitrary ``(θ, λ1)``; its supremum is :func:`pontryagin_value`."""
    b = bundle
    A, B = theta_amplitudes(b)
    return float(
        -lambda1 * b.k20 - 0.5 * (b.k20 + b.k02)
        + (A * np.cos(2 * theta) + B * np.sin(2 * theta)) / (2 * tau)
        + (b.g10**2 + b.g01**2 - b.g20 - b.g02) / (4 * tau)
    )


# ---------------------------------------------------------------------------
# closed second-order system


def bundle_rhs_array(y: np.ndarray, theta: float, lambda1: float, tau: float) -> np.ndarray:
    """Time derivative of the bundle array in :data:`BUNDLE_KEYS` order."""
    g10, g01, k10, k01, g20, g11, g02, k20, k11, k02 = y
    lt = 1.0 + 2.0 * lambda1
    c, s = np.cos(theta), np.sin(theta)
    r = c * g10 + s * g01
    q = c * k10 + s * k01
    out = np.empty(10)
    out[0] = g01 - s * q / (4 * tau)
    out[1] = -lt * g10 + c * q / (4 * tau)
    out[2] = k01
    out[3] = -lt * k10
    out[4] = 2 * g11 + s / (2 * tau) * (r * k10 - c * k20 - s * k11)
    out[5] = -lt * g20 + g02 + (r * (s * k01 - c * k10) + c * c * k20 - s * s * k02) / (4 * tau)
    out[6] = -2 * lt * g11 + c / (2 * tau) * (-r * k01 + s * k02 + c * k11)
    out[7] = 2 * k11 + 2 * s / tau * (-r * g10 + c * g20 + s * g11)
    out[8] = -lt * k20 + k02 + (r * (c * g10 - s * g01) - c * c * g20 + s * s * g02) / tau
    out[9] = -2 * lt * k11 + 2 * c / tau * (r * g01 - s * g02 - c * g11)
    return out


def bundle_rhs(bundle: ScalarBundle, theta: float, lambda1: float, tau: float,
               lambda2: float = 0.0) -> ScalarBundle:
    """Derivative of the ten scalars; only closed without the cubic term."""
    if lambda2 != 0.0:
        raise AnharmonicNotClosed("the second-order system closes only for lambda2 = 0")
    return ScalarBundle(*bundle_rhs_array(bundle.to_array(), theta, lambda1, tau))


def first_order_rhs_array(y: np.ndarray, theta: float, lambda1: float, tau: float) -> np.ndarray:
    """First four entries of :func:`bundle_rhs_array`; they do not couple to second order."""
    g10, g01, k10, k01 = y
    lt = 1.0 + 2.0 * lambda1
    c, s = np.cos(theta), np.sin(theta)
    q = c * k10 + s * k01
    return np.array([g01 - s * q / (4 * tau), -lt * g10 + c * q / (4 * tau), k01, -lt * k10])


def rk4(f, y, dt, *args):
    k1 = f(y, *args)
    k2 = f(y + 0.5 * dt * k1, *args)
    k3 = f(y + 0.5 * dt * k2, *args)
    k4 = f(y + dt * k3, *args)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


# ---------------------------------------------------------------------------
# general order


def mccoy_coefficient(n: int, m: int, k: int) -> complex:
    """Coefficient of ``X^{n-k} P^{m-k}`` in ``[Xⁿ, Pᵐ]`` for ``1 <= k <= min(n, m)``.

    ``-(-i)^k n! m! / (k! (n-k)! (m-k)!)``; zero outside that range (the
    ``k = 0`` term of the ordering sum cancels inside the commutator).
    """
    if k < 1 or k > n or k > m:
        return 0j
    mag = factorial(n) * factorial(m) // (factorial(k) * factorial(n - k) * factorial(m - k))
    return complex(-((-1j) ** k) * mag)


def commutator_via_mccoy(ops, n: int, m: int) -> np.ndarray:
    """``[Xⁿ, Pᵐ] = Σ_{k>=1} C(n,m,k) X^{n-k} P^{m-k}``, normal-ordered in ``X`` then ``P``."""
    out = np.zeros((ops.dim, ops.dim), dtype=complex)
    for k in range(1, min(n, m) + 1):
        out += mccoy_coefficient(n, m, k) * ops.xp_power(n - k, m - k)
    return out


class TruncatedTable:
    """``(n, m) -> value`` with the constants ``Γ(0,0) = 1``, ``κ(0,0) = 0`` and zero-fill above the cap."""

    def __init__(self, table: np.ndarray, order_cap: int, origin: complex):
        self.table = table
        self.order_cap = order_cap
        self.origin = origin
        self.closed = True

    def __call__(self, n: int, m: int) -> complex:
        if n < 0 or m < 0:
            return 0j
        if n == 0 and m == 0:
            return self.origin
        if n + m > self.order_cap:
            self.closed = False
            return 0j
        return self.table[n, m]


def _xp_times_moment(n: int, m: int, a: int, b: int):
    """Terms of ``XⁿPᵐ Xᵃ Pᵇ`` as ``[(coef, n', m')]`` in ``X…P…`` order.

    Uses ``PᵐXᵃ = XᵃPᵐ - [Xᵃ, Pᵐ]`` with the commutator expanded by
    :func:`mccoy_coefficient`.
    """
    terms = [(1.0 + 0j, n + a, m + b)]
    for k in range(1, min(m, a) + 1):
        terms.append((-mccoy_coefficient(a, m, k), n + a - k, m - k + b))
    return terms


def _ordered_product(left: list, right: list, sign: float, acc: dict) -> None:
    """Add ``sign * A B`` to ``acc`` (``(n, m) -> coef``) in ``X…P…`` order."""
    for ca, na, ma in left:
        for cb, nb, mb in right:
            for c, n2, m2 in _xp_times_moment(na, ma, nb, mb):
                acc[(n2, m2)] = acc.get((n2, m2), 0j) + sign * ca * cb * c


def _commutator_monomials(n: int, m: int, poly: list) -> dict:
    """``[XⁿPᵐ, A]`` as ``(n, m) -> coef``; exact cancellations are dropped."""
    acc: dict = {}
    z = [(1.0 + 0j, n, m)]
    _ordered_product(z, poly, 1.0, acc)
    _ordered_product(poly, z, -1.0, acc)
    return {k: v for k, v in acc.items() if abs(v) > 1e-14 * (1 + abs(v))}


def general_bundle_rhs(order_cap: int, G: np.ndarray, Kt: np.ndarray, theta: float,
                       lambda1: float, lambda2: float, tau: float):
    """Derivatives of ``Γ(n,m)`` and ``κ(n,m)`` for ``n + m <= order_cap``.

    ``G[n, m] = Tr(XⁿPᵐΩ)`` and ``Kt[n, m] = i Tr(XⁿPᵐΛ)`` are complex tables
    (``Γ(1,1)`` unshifted). The optimal readout is ``r = cosθ Γ(1,0) + sinθ Γ(0,1)``.

    With ``K_r = rL/2τ - L²/4τ`` the costate pair obeys::

        dΩ/dt = -i[H, Ω] + ½[K_r, Λ]
        dΛ/dt = -i[H, Λ] + 2[K_r, Ω]

    so every derivative is a trace of a commutator of a polynomial in ``X, P``
    against ``Ω`` or ``Λ``. Each commutator is reordered into ``X…P…``
    monomials with the ordering identity behind McCoy's formula, then read
    off the tables; entries above the cap are zero-filled.

    Returns ``(dG, dK, closed)`` where ``closed`` is ``False`` if any
    zero-filled entry was referenced.
    """
    if lambda2 != 0.0 and order_cap < 3:
        raise AnharmonicNotClosed("order_cap must be at least 3 when lambda2 != 0")
    c, s = np.cos(theta), np.sin(theta)
    r = c * G[1, 0] + s * G[0, 1]
    gam = TruncatedTable(G, order_cap, 1.0 + 0j)
    kap = TruncatedTable(Kt, order_cap, 0j)

    # Tr(Z Λ) = -i κ-table, Tr(Z Ω) = Γ-table
    def lam_tr(n, m):
        return -1j * kap(n, m)

    # polynomials as lists of (coef, n, m)
    H = [(0.5 + lambda1, 2, 0), (0.5, 0, 2)]
    if lambda2:
        H.append((lambda2, 3, 0))
    L = [(c, 1, 0), (s, 0, 1)]
    # L² = c²X² + s²P² + cs(XP + PX) = c²X² + s²P² + 2cs XP - i cs
    L2 = [(c * c, 2, 0), (s * s, 0, 2), (2 * c * s, 1, 1), (-1j * c * s, 0, 0)]
    Kr = [(r / (2 * tau) * cf, n, m) for cf, n, m in L] + [(-cf / (4 * tau), n, m) for cf, n, m in L2]

    def comm_trace(poly, n, m, tr):
        # Tr(Z [A, Y]) = Tr([Z, A] Y) with Z = XⁿPᵐ
        return sum(cf * tr(n2, m2) for (n2, m2), cf in _commutator_monomials(n, m, poly).items())

    dG = np.zeros_like(G)
    dK = np.zeros_like(Kt)
    for n in range(order_cap + 1):
        for m in range(order_cap + 1 - n):
            if n == 0 and m == 0:
                continue
            # d Tr(ZΩ) = -i Tr([Z,H]Ω) + ½ Tr([Z,K_r]Λ)
            dG[n, m] = -1j * comm_trace(H, n, m, gam) + 0.5 * comm_trace(Kr, n, m, lam_tr)
            # d κ = i d Tr(ZΛ) = i(-i Tr([Z,H]Λ) + 2 Tr([Z,K_r]Ω))
            dK[n, m] = 1j * (-1j * comm_trace(H, n, m, lam_tr) + 2 * comm_trace(Kr, n, m, gam))
    return dG, dK, gam.closed and kap.closed


def bundle_to_tables(bundle: ScalarBundle, order_cap: int = 2):
    """Complex ``(G, K)`` tables holding the bundle; ``Γ(1,1) = Γ̃(1,1) + i/2``."""
    G = np.zeros((order_cap + 1, order_cap + 1), dtype=complex)
    K = np.zeros_like(G)
    b = bundle
    G[0, 0] = 1.0
    G[1, 0], G[0, 1], G[2, 0], G[1, 1], G[0, 2] = b.g10, b.g01, b.g20, b.g11t + 0.5j, b.g02
    K[1, 0], K[0, 1], K[2, 0], K[1, 1], K[0, 2] = b.k10, b.k01, b.k20, b.k11, b.k02
    return G, K


def tables_to_bundle(G: np.ndarray, K: np.ndarray) -> ScalarBundle:
    return ScalarBundle(
        g10=G[1, 0].real, g01=G[0, 1].real, k10=K[1, 0].real, k01=K[0, 1].real,
        g20=G[2, 0].real, g11t=(G[1, 1] - 0.5j).real, g02=G[0, 2].real,
        k20=K[2, 0].real, k11=K[1, 1].real, k02=K[0, 2].real,
    )
