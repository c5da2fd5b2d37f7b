"""First-order readout variables for a harmonic oscillator (``λ1 = 0``).

With ``φ = θ + t`` the quantities

    r = ½⟨[L_θ, σ]_+⟩,  v = ½⟨[M_θ, σ]_+⟩,  w = i⟨[σ, L_θ]⟩,  z = i⟨[σ, M_θ]⟩

obey ``ṙ = φ̇ v``, ``v̇ = -φ̇ r + w/4τ``, ``ẇ = φ̇ z``, ``ż = -φ̇ w``: a
resonantly driven rotation. ``(w, z)`` just rotates, so ``w = A cosφ + B sinφ``,
and ``r + iv`` has a closed form up to one oscillatory integral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad


@dataclass(frozen=True)
class UVWZ:
    r: float
    v: float
    w: float
    z: float

    def to_array(self) -> np.ndarray:
        return np.array([self.r, self.v, self.w, self.z], dtype=float)


def uvwz_from_bundle(g10, g01, k10, k01, theta) -> UVWZ:
    """Rotate first-order bundle entries into the ``θ`` frame."""
    c, s = np.cos(theta), np.sin(theta)
    return UVWZ(c * g10 + s * g01, -s * g10 + c * g01, c * k10 + s * k01, -s * k10 + c * k01)


def uvwz_rhs(state: UVWZ | np.ndarray, phi_dot: float, tau: float) -> np.ndarray:
    r, v, w, z = state.to_array() if isinstance(state, UVWZ) else state
    return np.array([phi_dot * v, -phi_dot * r + w / (4 * tau), phi_dot * z, -phi_dot * w])


def integrate_uvwz(state0: UVWZ, phi_dot_fn, tau: float, t_f: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 with ``φ̇`` sampled at the stage times; returns ``(t, states)``."""
    n = int(round(t_f / dt))
    t = np.arange(n + 1) * dt
    out = np.empty((n + 1, 4))
    y = state0.to_array()
    out[0] = y
    for k in range(n):
        tk = t[k]
        # stage times approached from inside the step, so kinks on the grid are never straddled
        pd0 = phi_dot_fn(tk + 1e-12 * dt)
        pdm = phi_dot_fn(tk + 0.5 * dt)
        pd1 = phi_dot_fn(tk + dt - 1e-12 * dt)
        k1 = uvwz_rhs(y, pd0, tau)
        k2 = uvwz_rhs(y + 0.5 * dt * k1, pdm, tau)
        k3 = uvwz_rhs(y + 0.5 * dt * k2, pdm, tau)
        k4 = uvwz_rhs(y + dt * k3, pd1, tau)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return t, out


def analytic_uvwz(alpha: complex, A: float, B: float, phi_fn, t, tau: float,
                  breakpoints=()) -> tuple[np.ndarray, np.ndarray]:
    """``r + iv = e^{-iφ}(α + i t (A + iB)/8τ + ∫₀ᵗ (i/8τ)(A - iB) e^{2iφ(s)} ds)``.

    ``phi_fn`` must satisfy ``φ(0) = 0``. The integral is done by adaptive
    quadrature, split at ``breakpoints`` where ``φ`` has kinks.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    pref = 1j * (A - 1j * B) / (8 * tau)
    bps = sorted(b for b in breakpoints if b > 0)
    out = np.empty(t.size, dtype=complex)
    for i, ti in enumerate(t):
        edges = [0.0] + [b for b in bps if b < ti] + [ti]
        re = im = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            re += quad(lambda s: np.cos(2 * phi_fn(s)), a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
            im += quad(lambda s: np.sin(2 * phi_fn(s)), a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        integral = pref * (re + 1j * im)
        out[i] = np.exp(-1j * phi_fn(ti)) * (alpha + 1j * ti * (A + 1j * B) / (8 * tau) + integral)
    return out.real, out.imag


def analytic_uvwz_theta0(alpha: complex, A: float, B: float, t, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed form for ``θ ≡ 0`` (``φ = t``), where the integral is elementary."""
    t = np.asarray(t, dtype=float)
    integral = 1j * (A - 1j * B) / (8 * tau) * (np.exp(2j * t) - 1) / 2j
    z = np.exp(-1j * t) * (alpha + 1j * t * (A + 1j * B) / (8 * tau) + integral)
    return z.real, z.imag
