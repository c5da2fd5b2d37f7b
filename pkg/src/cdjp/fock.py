"""Truncated single-mode Fock space: operators, states and expectation values.

Quadratures use the dimensionless convention ``X = (a + a†)/√2`` and
``P = i(a† - a)/√2`` so that the vacuum has ``Var X = Var P = 1/2``.
Every operator here is built from products of the *truncated* ladder
matrices; identities that rely on ``[X, P] = i`` therefore fail on the top
couple of levels, and every truncation-sensitive check in the package
excludes them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatch, TruncationLeak

DEFAULT_LEVELS = 36
LEAK_TOL = 1e-10


@dataclass(frozen=True)
class OperatorSet:
    """Dense operator matrices for one truncation size."""

    n_levels: int
    a: np.ndarray
    adag: np.ndarray
    x: np.ndarray
    p: np.ndarray
    x2: np.ndarray
    p2: np.ndarray
    x3: np.ndarray
    xp_sym: np.ndarray
    number: np.ndarray
    identity: np.ndarray

    @property
    def dim(self) -> int:
        return self.n_levels

    def xp_power(self, n: int, m: int) -> np.ndarray:
        """``X**n @ P**m`` built from truncated matrices."""
        return _xp_power(self.n_levels, n, m)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def hermiticity_residual(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T)))


@lru_cache(maxsize=16)
def _ladder(n_levels: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, n_levels, dtype=float)), k=1).astype(complex)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=256)
def _xp_power(n_levels: int, n: int, m: int) -> np.ndarray:
    ops = build_operators(n_levels)
    out = np.linalg.matrix_power(ops.x, n) @ np.linalg.matrix_power(ops.p, m)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def build_operators(n_levels: int = DEFAULT_LEVELS) -> OperatorSet:
    """Build the operator set for ``n_levels`` Fock levels (0..n_levels-1)."""
    n_levels = int(n_levels)
    if n_levels < 2:
        raise ValueError(f"need at least 2 Fock levels, got {n_levels}")
    a = _ladder(n_levels)
    adag = a.conj().T
    x = (a + adag) / np.sqrt(2.0)
    p = 1j * (adag - a) / np.sqrt(2.0)
    x2 = x @ x
    p2 = p @ p
    mats = dict(
        a=a,
        adag=adag,
        x=x,
        p=p,
        x2=x2,
        p2=p2,
        x3=x2 @ x,
        xp_sym=0.5 * (x @ p + p @ x),
        number=np.diag(np.arange(n_levels, dtype=float)).astype(complex),
        identity=np.eye(n_levels, dtype=complex),
    )
    for v in mats.values():
        v.setflags(write=False)
    return OperatorSet(n_levels=n_levels, **mats)


def quadratures(ops: OperatorSet, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Measured quadrature ``L_θ`` and its conjugate ``M_θ``."""
    c, s = np.cos(theta), np.sin(theta)
    return c * ops.x + s * ops.p, -s * ops.x + c * ops.p


def hamiltonian(ops: OperatorSet, lambda1: float = 0.0, lambda2: float = 0.0) -> np.ndarray:
    """Parametric oscillator ``½(X² + P²) + λ1 X² + λ2 X³``.

    The harmonic part is taken as ``a†a + ½`` which equals ``½(X² + P²)``
    everywhere except the top truncated level, where the product form would
    shift the last eigenvalue. Using the number operator keeps
    ``[H0, a] = -a`` exact in the truncated space.
    """
    h = ops.number + 0.5 * ops.identity
    if lambda1:
        h = h + lambda1 * ops.x2
    if lambda2:
        h = h + lambda2 * ops.x3
    return h


# ---------------------------------------------------------------------------
# states


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def _check_leak(psi: np.ndarray, what: str) -> None:
    leak = float(np.sum(np.abs(psi[-2:]) ** 2))
    if leak > LEAK_TOL:
        raise TruncationLeak(
            f"{what}: weight {leak:.3e} in the top two Fock levels exceeds {LEAK_TOL:g}; "
            "increase n_levels"
        )


def coherent_ket(alpha: complex, n_levels: int) -> np.ndarray:
    n = np.arange(n_levels)
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    mag = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * log_fact)
    if alpha == 0:
        psi = np.zeros(n_levels, dtype=complex)
        psi[0] = 1.0
        return psi
    return mag * np.power(complex(alpha), n)


def cat_ket(alpha: complex, n_levels: int, parity: int = +1) -> np.ndarray:
    """``|α⟩ ± |-α⟩`` normalized with the exact overlap ``⟨α|-α⟩ = e^{-2|α|²}``."""
    if alpha == 0:
        if parity < 0:
            raise ValueError("odd cat with alpha=0 is the zero vector")
        return coherent_ket(0.0, n_levels)
    plus = coherent_ket(alpha, n_levels)
    minus = coherent_ket(-alpha, n_levels)
    norm = np.sqrt(2.0 * (1.0 + parity * np.exp(-2.0 * abs(alpha) ** 2)))
    return (plus + parity * minus) / norm


def squeezed_ket(xi: complex, alpha: complex, n_levels: int, pad: int = 80) -> np.ndarray:
    """``D(α) S(ξ)|0⟩`` with ``S(ξ) = exp(½(ξ* a² - ξ a†²))``.

    Built in an enlarged space and cut back, so the truncated vector is the
    projection of the exact state.
    """
    big = n_levels + pad
    a = np.asarray(_ladder(big))
    ad = a.conj().T
    vac = np.zeros(big, dtype=complex)
    vac[0] = 1.0
    psi = expm(0.5 * (np.conj(xi) * (a @ a) - xi * (ad @ ad))) @ vac
    if alpha != 0:
        psi = expm(alpha * ad - np.conj(alpha) * a) @ psi
    return psi[:n_levels]


def make_ket(kind: str, n_levels: int = DEFAULT_LEVELS, **params) -> np.ndarray:
    """State vector for one of the supported families.

    ``kind`` is one of ``fock_superposition`` (``coefficients``), ``cat``
    (``alpha``, optional ``parity``), ``coherent`` (``alpha``),
    ``squeezed_vacuum`` (``xi``) or ``squeezed_coherent`` (``xi``, ``alpha``).
    """
    if kind == "fock_superposition":
        coeffs = np.asarray(params["coefficients"], dtype=complex)
        if coeffs.size > n_levels:
            raise TruncationLeak(f"{coeffs.size} coefficients do not fit in {n_levels} levels")
        psi = np.zeros(n_levels, dtype=complex)
        psi[: coeffs.size] = coeffs
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise ValueError("all-zero superposition")
        psi /= norm
    elif kind == "cat":
        psi = cat_ket(complex(params["alpha"]), n_levels, int(params.get("parity", 1)))
    elif kind == "coherent":
        psi = coherent_ket(complex(params["alpha"]), n_levels)
    elif kind == "squeezed_vacuum":
        psi = squeezed_ket(complex(params["xi"]), 0.0, n_levels)
    elif kind == "squeezed_coherent":
        psi = squeezed_ket(complex(params["xi"]), complex(params["alpha"]), n_levels)
    else:
        raise ValueError(f"unknown state kind {kind!r}")
    _check_leak(psi, kind)
    # cut-back states are renormalized after the leak check
    return psi / np.linalg.norm(psi)


def make_state(kind: str, n_levels: int = DEFAULT_LEVELS, **params) -> np.ndarray:
    """Density matrix of :func:`make_ket`."""
    return ket_to_dm(make_ket(kind, n_levels, **params))


# ---------------------------------------------------------------------------
# expectation values


def expect(op: np.ndarray, rho: np.ndarray) -> complex:
    return np.einsum("ij,ji->", op, rho)


def fidelity(rho: np.ndarray, rho_target: np.ndarray) -> float:
    """``Tr(ρ ρ_target)``; a fidelity only when the target is pure."""
    rho = np.asarray(rho)
    rho_target = np.asarray(rho_target)
    if rho.shape != rho_target.shape:
        raise DimensionMismatch(f"{rho.shape} vs {rho_target.shape}")
    return float(np.real(expect(rho, rho_target)))


def ket_fidelity(psi: np.ndarray, target: np.ndarray) -> float:
    if psi.shape != target.shape:
        raise DimensionMismatch(f"{psi.shape} vs {target.shape}")
    return float(abs(np.vdot(target, psi)) ** 2)


def moments(rho: np.ndarray, ops: OperatorSet) -> tuple[float, float, float, float, float]:
    """``(⟨X⟩, ⟨P⟩, Var X, Cov(X, P), Var P)`` with the symmetrized covariance."""
    mx = expect(ops.x, rho).real
    mp = expect(ops.p, rho).real
    vx = expect(ops.x2, rho).real - mx * mx
    vp = expect(ops.p2, rho).real - mp * mp
    cov = expect(ops.xp_sym, rho).real - mx * mp
    return float(mx), float(mp), float(vx), float(cov), float(vp)


def ket_moments(psi: np.ndarray, ops: OperatorSet) -> tuple[float, float, float, float, float]:
    return moments(ket_to_dm(psi), ops)


def check_density_matrix(rho: np.ndarray, *, trace_tol: float = 1e-9, herm_tol: float = 1e-12,
                         eig_tol: float = 1e-9) -> None:
    """Raise ``ValueError`` if ``rho`` breaks the density-matrix invariants."""
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"not a square matrix: {rho.shape}")
    if hermiticity_residual(rho) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > trace_tol:
        raise ValueError(f"trace {np.trace(rho).real!r} != 1")
    w = np.linalg.eigvalsh(rho)
    if w[0] < -eig_tol:
        raise ValueError(f"negative eigenvalue {w[0]:.3e}")
