"""Compiled pure-state loops for the optimizer and for trajectory batches.

Every Kraus map used here sends a pure state to a pure state, so a ket
``ψ`` carries the same information as ``ρ = |ψ⟩⟨ψ|``. ``X`` and ``P`` are
tridiagonal in the Fock basis, so each step costs ``O(n_levels)`` instead of
the dense ``O(n_levels³)``. The operators are applied as repeated products of
the truncated ``X`` and ``P`` matrices, which makes the results identical (to
round-off) to the dense steppers in :mod:`cdjp.sme`.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SQRT_HALF = 1.0 / math.sqrt(2.0)


@njit(cache=True, nogil=True)
def apply_quadrature(psi, c, s, out):
    """``out = (c X + s P) ψ`` with the truncated ladder."""
    n = psi.shape[0]
    up = complex(c, s) * SQRT_HALF  # coefficient on √k ψ[k-1] (from a†)
    dn = complex(c, -s) * SQRT_HALF  # coefficient on √(k+1) ψ[k+1] (from a)
    for k in range(n):
        v = 0j
        if k > 0:
            v += up * math.sqrt(k) * psi[k - 1]
        if k < n - 1:
            v += dn * math.sqrt(k + 1) * psi[k + 1]
        out[k] = v


@njit(cache=True, nogil=True)
def apply_hamiltonian(psi, lambda1, tmp, out):
    """``out = (a†a + ½ + λ1 X²) ψ``; ``tmp`` is scratch."""
    n = psi.shape[0]
    if lambda1 != 0.0:
        apply_quadrature(psi, 1.0, 0.0, tmp)
        apply_quadrature(tmp, 1.0, 0.0, out)
        for k in range(n):
            out[k] = (k + 0.5) * psi[k] + lambda1 * out[k]
    else:
        for k in range(n):
            out[k] = (k + 0.5) * psi[k]


@njit(cache=True, nogil=True)
def _norm2(psi):
    acc = 0.0
    for k in range(psi.shape[0]):
        acc += psi[k].real ** 2 + psi[k].imag ** 2
    return acc


@njit(cache=True, nogil=True)
def _vdot(a, b):
    acc = 0j
    for k in range(a.shape[0]):
        acc += a[k].conjugate() * b[k]
    return acc


def make_workspace(n_levels):
    """Scratch rows for the step functions below."""
    return np.zeros((4, n_levels), dtype=np.complex128)


@njit(cache=True, nogil=True)
def unitary_taylor4_inplace(psi, lambda1, dt, work):
    """``ψ <- Σ_{j<=4} (-i H dt)^j / j! ψ``; uses ``work[0:3]``."""
    n = psi.shape[0]
    term = work[0]
    nxt = work[1]
    tmp = work[2]
    for k in range(n):
        term[k] = psi[k]
    for j in range(1, 5):
        apply_hamiltonian(term, lambda1, tmp, nxt)
        f = -1j * dt / j
        for k in range(n):
            term[k] = f * nxt[k]
            psi[k] += term[k]


@njit(cache=True, nogil=True)
def unitary_taylor4(psi, lambda1, dt):
    out = psi.copy()
    unitary_taylor4_inplace(out, lambda1, dt, np.zeros((4, psi.shape[0]), dtype=np.complex128))
    return out


@njit(cache=True, nogil=True)
def stratonovich_ket_inplace(psi, r, theta, lambda1, tau, dt, work):
    """``ψ <- U(dt) M ψ / ‖·‖`` with ``M = 1 + (r dt/2τ) L - (dt/4τ) L²``."""
    n = psi.shape[0]
    c, s = math.cos(theta), math.sin(theta)
    l1 = work[0]
    l2 = work[1]
    apply_quadrature(psi, c, s, l1)
    apply_quadrature(l1, c, s, l2)
    a = r * dt / (2.0 * tau)
    b = dt / (4.0 * tau)
    for k in range(n):
        psi[k] = psi[k] + a * l1[k] - b * l2[k]
    unitary_taylor4_inplace(psi, lambda1, dt, work)
    nrm = math.sqrt(_norm2(psi))
    for k in range(n):
        psi[k] /= nrm


@njit(cache=True, nogil=True)
def stratonovich_ket_step(psi, r, theta, lambda1, tau, dt):
    out = psi.copy()
    stratonovich_ket_inplace(out, r, theta, lambda1, tau, dt,
                             np.zeros((4, psi.shape[0]), dtype=np.complex128))
    return out


@njit(cache=True, nogil=True)
def ito_ket_inplace(psi, dw, theta, lambda1, tau, dt, work):
    """``ψ <- (1 - iH dt + (r dt/2τ) L - (dt/8τ) L²) ψ / ‖·‖``, ``r = ⟨L⟩ + √τ dW/dt``.

    Returns the readout used.
    """
    n = psi.shape[0]
    c, s = math.cos(theta), math.sin(theta)
    l1 = work[0]
    l2 = work[1]
    h = work[2]
    tmp = work[3]
    apply_quadrature(psi, c, s, l1)
    apply_quadrature(l1, c, s, l2)
    apply_hamiltonian(psi, lambda1, tmp, h)
    mean_l = _vdot(psi, l1).real
    r = mean_l + math.sqrt(tau) * dw / dt
    a = r * dt / (2.0 * tau)
    b = dt / (8.0 * tau)
    for k in range(n):
        psi[k] = psi[k] - 1j * dt * h[k] + a * l1[k] - b * l2[k]
    nrm = math.sqrt(_norm2(psi))
    for k in range(n):
        psi[k] /= nrm
    return r


@njit(cache=True, nogil=True)
def ito_ket_step(psi, dw, theta, lambda1, tau, dt):
    out = psi.copy()
    r = ito_ket_inplace(out, dw, theta, lambda1, tau, dt, np.zeros((4, psi.shape[0]), dtype=np.complex128))
    return out, r


@njit(cache=True, nogil=True)
def ket_moments(psi, theta, row, work):
    """Fill ``row[0:7]`` with ⟨X⟩, ⟨P⟩, Var X, Cov, Var P, ⟨L⟩, ⟨L²⟩; uses ``work[0:3]``."""
    n = psi.shape[0]
    xp = work[0]
    pp = work[1]
    lp = work[2]
    apply_quadrature(psi, 1.0, 0.0, xp)
    apply_quadrature(psi, 0.0, 1.0, pp)
    mx = _vdot(psi, xp).real
    mp = _vdot(psi, pp).real
    x2 = _norm2(xp)
    p2 = _norm2(pp)
    xps = _vdot(xp, pp).real
    c, s = math.cos(theta), math.sin(theta)
    for k in range(n):
        lp[k] = c * xp[k] + s * pp[k]
    row[0] = mx
    row[1] = mp
    row[2] = x2 - mx * mx
    row[3] = xps - mx * mp
    row[4] = p2 - mp * mp
    row[5] = c * mx + s * mp
    row[6] = _norm2(lp)


# ---------------------------------------------------------------------------
# reduced system (mirrors cdjp.bundle; kept in sync by tests)


@njit(cache=True, nogil=True)
def bundle_rhs_nb(y, theta, lambda1, tau, out):
    g10, g01, k10, k01, g20, g11, g02, k20, k11, k02 = (
        y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7], y[8], y[9])
    lt = 1.0 + 2.0 * lambda1
    c, s = math.cos(theta), math.sin(theta)
    r = c * g10 + s * g01
    q = c * k10 + s * k01
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


@njit(cache=True, nogil=True)
def optimal_theta_nb(y, previous):
    a = 0.5 * (y[0] * y[0] - y[1] * y[1] - y[4] + y[6])
    b = y[0] * y[1] - y[5]
    if math.hypot(a, b) < 1e-12:
        return previous
    return 0.5 * math.atan2(b, a)


@njit(cache=True, nogil=True)
def optimal_lambda1_nb(k20, lambda1_max):
    return -lambda1_max if k20 > 0 else lambda1_max


@njit(cache=True, nogil=True)
def pontryagin_nb(y, lambda1_max, tau):
    a = 0.5 * (y[0] * y[0] - y[1] * y[1] - y[4] + y[6])
    b = y[0] * y[1] - y[5]
    return (lambda1_max * abs(y[7]) - 0.5 * (y[7] + y[9]) + math.hypot(a, b) / (2 * tau)
            + (y[0] * y[0] + y[1] * y[1] - y[4] - y[6]) / (4 * tau))


KAPPA_TIE = 1e-12


@njit(cache=True, nogil=True)
def optimal_lambda1_tied(k20, lambda1_max):
    """Bang-bang law with ``|κ20| <= KAPPA_TIE`` read as the ``+λmax`` tie."""
    return -lambda1_max if k20 > KAPPA_TIE else lambda1_max


@njit(cache=True, nogil=True)
def _theta(y, theta_free, theta_fixed, previous):
    if theta_free:
        return optimal_theta_nb(y, previous)
    return theta_fixed


@njit(cache=True, nogil=True)
def _rk4_held(y, h, tau, lambda1, theta_free, theta_fixed, previous):
    """RK4 with ``λ1`` held and ``θ`` re-optimized at every stage."""
    k1 = np.empty(10)
    k2 = np.empty(10)
    k3 = np.empty(10)
    k4 = np.empty(10)
    th = _theta(y, theta_free, theta_fixed, previous)
    bundle_rhs_nb(y, th, lambda1, tau, k1)
    y2 = y + 0.5 * h * k1
    th = _theta(y2, theta_free, theta_fixed, th)
    bundle_rhs_nb(y2, th, lambda1, tau, k2)
    y3 = y + 0.5 * h * k2
    th = _theta(y3, theta_free, theta_fixed, th)
    bundle_rhs_nb(y3, th, lambda1, tau, k3)
    y4 = y + h * k3
    th = _theta(y4, theta_free, theta_fixed, th)
    bundle_rhs_nb(y4, th, lambda1, tau, k4)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True, nogil=True)
def _switch_fraction(y, y_end, dt, tau, lambda1, theta_free, theta_fixed, previous, level):
    """Fraction ``f`` of the step at which ``κ20 - level`` crosses zero (Illinois regula falsi)."""
    fa, ga = 0.0, y[7] - level
    fb, gb = 1.0, y_end[7] - level
    side = 0
    f = 1.0
    for _ in range(60):
        f = (fa * gb - fb * ga) / (gb - ga)
        g = _rk4_held(y, f * dt, tau, lambda1, theta_free, theta_fixed, previous)[7] - level
        if abs(g) < 1e-15 or fb - fa < 1e-13:
            break
        if (g > 0) == (gb > 0):
            fb, gb = f, g
            if side == -1:
                ga *= 0.5
            side = -1
        else:
            fa, ga = f, g
            if side == 1:
                gb *= 0.5
            side = 1
    return f


@njit(cache=True, nogil=True)
def bundle_step_nb(y, dt, tau, lambda1_max, theta_free, theta_fixed, previous):
    """Advance the bundle by ``dt`` under the Pontryagin controls.

    ``λ1`` is held at its start-of-step value. If the bang-bang law flips
    inside the step, the switching time is located by regula falsi and the
    step is split there, so RK4 never straddles the discontinuity.

    Returns ``(n_sub, h, ends, theta_mid, lambda_sub, r_mid)`` for one or
    two sub-steps; ``ends[j]`` is the bundle after sub-step ``j`` and the
    midpoint quantities use the average of that sub-step's endpoints.
    """
    h = np.zeros(2)
    ends = np.zeros((2, 10))
    th_m = np.zeros(2)
    l1_s = np.zeros(2)
    r_m = np.zeros(2)
    l1 = optimal_lambda1_tied(y[7], lambda1_max)
    y_end = _rk4_held(y, dt, tau, l1, theta_free, theta_fixed, previous)
    n_sub = 1
    h[0] = dt
    ends[0] = y_end
    l1_s[0] = l1
    if lambda1_max > 0.0 and optimal_lambda1_tied(y_end[7], lambda1_max) != l1:
        level = KAPPA_TIE if l1 < 0 else 0.0
        f = _switch_fraction(y, y_end, dt, tau, l1, theta_free, theta_fixed, previous, level)
        if f <= 1e-9:
            l1_s[0] = -l1
            ends[0] = _rk4_held(y, dt, tau, -l1, theta_free, theta_fixed, previous)
        elif f < 1.0 - 1e-9:
            n_sub = 2
            h[0] = f * dt
            ends[0] = _rk4_held(y, h[0], tau, l1, theta_free, theta_fixed, previous)
            h[1] = dt - h[0]
            th_sw = _theta(ends[0], theta_free, theta_fixed, previous)
            l1_s[1] = -l1
            ends[1] = _rk4_held(ends[0], h[1], tau, -l1, theta_free, theta_fixed, th_sw)
    start = y
    prev = previous
    for j in range(n_sub):
        ym = 0.5 * (start + ends[j])
        th_m[j] = _theta(ym, theta_free, theta_fixed, prev)
        r_m[j] = math.cos(th_m[j]) * ym[0] + math.sin(th_m[j]) * ym[1]
        prev = th_m[j]
        start = ends[j]
    return n_sub, h, ends, th_m, l1_s, r_m


# record columns shared by the optimal and scheduled loops
REC_COLS = ("t", "theta", "lambda1", "r", "x", "p", "var_x", "cov", "var_p", "mean_l", "mean_l2", "K")


@njit(cache=True, nogil=True)
def optimal_mlp_kernel(psi0, y0, tau, dt, n_steps, lambda1_max, theta_free, theta_fixed, record):
    """Most-likely path with the Pontryagin controls.

    Each step advances the bundle with :func:`bundle_step_nb`, then moves
    ``ψ`` with one Stratonovich Kraus step per sub-step, using the readout
    and controls at the sub-step midpoint. Returns ``(ψ_final, y_final, J,
    rec)``; ``rec`` has ``n_steps + 1`` rows in the :data:`REC_COLS` layout
    when ``record`` is true, else one row.
    """
    psi = psi0.copy()
    y = y0.copy()
    nrec = n_steps + 1 if record else 1
    rec = np.zeros((nrec, 12))
    row = np.empty(7)
    work = np.zeros((4, psi.shape[0]), dtype=np.complex128)
    th = _theta(y, theta_free, theta_fixed, 0.0)
    J = 0.0
    f_prev = 0.0
    for k in range(n_steps + 1):
        th_k = _theta(y, theta_free, theta_fixed, th)
        l1_k = optimal_lambda1_tied(y[7], lambda1_max)
        r_k = math.cos(th_k) * y[0] + math.sin(th_k) * y[1]
        ket_moments(psi, th_k, row, work)
        f_k = (r_k * r_k - 2.0 * r_k * row[5] + row[6]) / (2.0 * tau)
        if k > 0:
            J += 0.5 * dt * (f_prev + f_k)
        f_prev = f_k
        if record:
            rec[k, 0] = k * dt
            rec[k, 1] = th_k
            rec[k, 2] = l1_k
            rec[k, 3] = r_k
            for j in range(7):
                rec[k, 4 + j] = row[j]
            rec[k, 11] = pontryagin_nb(y, lambda1_max, tau)
        if k == n_steps:
            break
        n_sub, h, ends, th_m, l1_s, r_m = bundle_step_nb(y, dt, tau, lambda1_max, theta_free,
                                                         theta_fixed, th_k)
        for j in range(n_sub):
            stratonovich_ket_inplace(psi, r_m[j], th_m[j], l1_s[j], tau, h[j], work)
        y = ends[n_sub - 1].copy()
        th = th_k
    return psi, y, J, rec


@njit(cache=True, nogil=True)
def _first_order_rhs(y, theta, lambda1, tau, out):
    lt = 1.0 + 2.0 * lambda1
    c, s = math.cos(theta), math.sin(theta)
    q = c * y[2] + s * y[3]
    out[0] = y[1] - s * q / (4 * tau)
    out[1] = -lt * y[0] + c * q / (4 * tau)
    out[2] = y[3]
    out[3] = -lt * y[2]


@njit(cache=True, nogil=True)
def scheduled_mlp_kernel(psi0, y0, tau, dt, n_steps, theta_half, lambda_half, record):
    """Most-likely path under prescribed controls, first-order bundle only.

    ``theta_half`` and ``lambda_half`` sample the controls on the half-step
    grid ``t = j dt/2`` (length ``2 n_steps + 1``) so that RK4 stages and
    the midpoint Kraus step see the exact control values.
    """
    psi = psi0.copy()
    y = y0.copy()
    nrec = n_steps + 1 if record else 1
    rec = np.zeros((nrec, 12))
    row = np.empty(7)
    work = np.zeros((4, psi.shape[0]), dtype=np.complex128)
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    J = 0.0
    f_prev = 0.0
    for k in range(n_steps + 1):
        th_k = theta_half[2 * k]
        l1_k = lambda_half[2 * k]
        r_k = math.cos(th_k) * y[0] + math.sin(th_k) * y[1]
        ket_moments(psi, th_k, row, work)
        f_k = (r_k * r_k - 2.0 * r_k * row[5] + row[6]) / (2.0 * tau)
        if k > 0:
            J += 0.5 * dt * (f_prev + f_k)
        f_prev = f_k
        if record:
            rec[k, 0] = k * dt
            rec[k, 1] = th_k
            rec[k, 2] = l1_k
            rec[k, 3] = r_k
            for j in range(7):
                rec[k, 4 + j] = row[j]
            rec[k, 11] = np.nan
        if k == n_steps:
            break
        th_m = theta_half[2 * k + 1]
        l1_m = lambda_half[2 * k + 1]
        th_e = theta_half[2 * k + 2]
        l1_e = lambda_half[2 * k + 2]
        _first_order_rhs(y, th_k, l1_k, tau, k1)
        _first_order_rhs(y + 0.5 * dt * k1, th_m, l1_m, tau, k2)
        _first_order_rhs(y + 0.5 * dt * k2, th_m, l1_m, tau, k3)
        _first_order_rhs(y + dt * k3, th_e, l1_e, tau, k4)
        y_new = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        r_m = math.cos(th_m) * 0.5 * (y[0] + y_new[0]) + math.sin(th_m) * 0.5 * (y[1] + y_new[1])
        stratonovich_ket_inplace(psi, r_m, th_m, l1_m, tau, dt, work)
        y = y_new
    return psi, y, J, rec


@njit(cache=True, nogil=True)
def ito_trajectory_kernel(psi0, theta_steps, lambda_steps, tau, dt, dw, record):
    """Itô trajectory with controls held over each step.

    Returns ``(ψ_final, rec)`` with columns ``t, ⟨X⟩, ⟨P⟩, Var X, Cov, Var P, r``;
    ``r`` of row ``k`` is the readout of step ``k`` (NaN on the last row).
    """
    n_steps = dw.shape[0]
    psi = psi0.copy()
    nrec = n_steps + 1 if record else 1
    rec = np.zeros((nrec, 7))
    row = np.empty(7)
    work = np.zeros((4, psi.shape[0]), dtype=np.complex128)
    for k in range(n_steps + 1):
        if record:
            ket_moments(psi, 0.0, row, work)
            rec[k, 0] = k * dt
            for j in range(5):
                rec[k, 1 + j] = row[j]
            rec[k, 6] = np.nan
        if k == n_steps:
            break
        r = ito_ket_inplace(psi, dw[k], theta_steps[k], lambda_steps[k], tau, dt, work)
        if record:
            rec[k, 6] = r
    return psi, rec


@njit(cache=True, nogil=True)
def ito_batch_fidelities(psi0, target, theta_steps, lambda_steps, tau, dt, dw_block):
    """Final fidelities ``|⟨target|ψ_i⟩|²`` for each row of pre-drawn increments."""
    n_traj = dw_block.shape[0]
    out = np.empty(n_traj)
    for i in range(n_traj):
        psi, _ = ito_trajectory_kernel(psi0, theta_steps, lambda_steps, tau, dt, dw_block[i], False)
        ov = _vdot(target, psi)
        out[i] = ov.real ** 2 + ov.imag ** 2
    return out
