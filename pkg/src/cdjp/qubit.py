"""Monitored qubit in Bloch coordinates.

For ``ρ = ½(1 + q·σ)``, ``H = h0 + h·σ`` and ``L = l0 + l·σ`` the
Stratonovich conditional drift reduces to

    q̇ = 2 h × q + ((r - l0)/τ)(l - (l·q) q),

and the readout log-likelihood rate to ``-(r² - 2r⟨L⟩ + ⟨L²⟩)/2τ`` with
``⟨L⟩ = l0 + l·q`` and ``⟨L²⟩ = l0² + |l|² + 2 l0 l·q``. Expanding a costate
as ``λ0 + λ·σ`` gives the stochastic Hamiltonian ``λ·F(q, r) + G(q, r)``.
These closed forms are written out by hand so they can be checked against
the matrix implementation in :mod:`cdjp.costate`.
"""

from __future__ import annotations

import numpy as np

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


def from_bloch(c0: float, c: np.ndarray) -> np.ndarray:
    """``c0·1 + c·σ``."""
    return c0 * np.eye(2, dtype=complex) + np.einsum("i,ijk->jk", np.asarray(c, dtype=float), PAULI)


def density_from_bloch(q: np.ndarray) -> np.ndarray:
    return 0.5 * from_bloch(1.0, q)


def bloch_drift(q, r: float, h, l0: float, l, tau: float) -> np.ndarray:
    q, h, l = (np.asarray(v, dtype=float) for v in (q, h, l))
    return 2 * np.cross(h, q) + (r - l0) / tau * (l - np.dot(l, q) * q)


def bloch_log_likelihood(q, r: float, l0: float, l, tau: float) -> float:
    q, l = np.asarray(q, dtype=float), np.asarray(l, dtype=float)
    mean_l = l0 + np.dot(l, q)
    mean_l2 = l0 * l0 + np.dot(l, l) + 2 * l0 * np.dot(l, q)
    return float(-(r * r - 2 * r * mean_l + mean_l2) / (2 * tau))


def bloch_hamiltonian(costate_vec, q, r: float, h, l0: float, l, tau: float) -> float:
    """``Σ λ_i F_i(q, r) + G(q, r)``; the identity part of the costate drops out."""
    return float(np.dot(costate_vec, bloch_drift(q, r, h, l0, l, tau)) + bloch_log_likelihood(q, r, l0, l, tau))
