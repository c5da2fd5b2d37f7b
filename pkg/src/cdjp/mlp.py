"""Integration of most-likely paths under optimal or prescribed controls.

Both drivers share one step layout:

1. advance the reduced bundle by RK4 (the controls enter every stage);
2. move the state with one Stratonovich Kraus step whose readout and
   controls are evaluated at the step midpoint.

``mlp_integrate`` steps the full density matrix and can co-integrate a
shadow costate for consistency checks. ``mlp_integrate_ket`` runs the same
scheme on a state vector through compiled loops and is what the optimizer
calls thousands of times.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .bundle import (
    ScalarBundle, bundle_from_states, bundle_rhs_array, first_order_rhs_array,
    optimal_theta, pontryagin_value, rk4,
)
from .costate import costate_from_bundle, costate_rhs_general
from .errors import ConfigError, NonPureInput
from .fock import OperatorSet, expect, hamiltonian, moments, quadratures
from .paths import MLP_COLUMNS, ControlSchedule, MLPPath
from .sme import WEAK_RATIO_MAX, StepParams, n_steps_for, stratonovich_step


def cost_functional(r, mean_l, mean_l2, tau: float, dt: float) -> float:
    """Trapezoidal ``∫ (r² - 2r⟨L⟩ + ⟨L²⟩) dt / 2τ``; smaller means a more probable record."""
    r = np.asarray(r, dtype=float)
    f = (r * r - 2 * r * np.asarray(mean_l) + np.asarray(mean_l2)) / (2 * tau)
    if f.size < 2:
        return 0.0
    return float(dt * (f.sum() - 0.5 * (f[0] + f[-1])))


def _check_ratio(dt, tau):
    if dt <= 0 or tau <= 0 or dt / tau >= WEAK_RATIO_MAX:
        raise ConfigError(f"need dt > 0, tau > 0 and dt/tau < {WEAK_RATIO_MAX}")


def _shadow_step(rho, sigma, h, tau, lambda1, theta_free, theta_fixed, previous, ops):
    """RK4 on the operator equations; θ is re-optimized from the shadow's own traces."""
    H = hamiltonian(ops, lambda1)

    def f(r_, s_):
        th = optimal_theta(bundle_from_states(r_, s_, ops), previous) if theta_free else theta_fixed
        L, _ = quadratures(ops, th)
        return costate_rhs_general(r_, s_, H, L, tau, check_gauge=False)

    k1 = f(rho, sigma)
    k2 = f(rho + 0.5 * h * k1[0], sigma + 0.5 * h * k1[1])
    k3 = f(rho + 0.5 * h * k2[0], sigma + 0.5 * h * k2[1])
    k4 = f(rho + h * k3[0], sigma + h * k3[1])
    return (rho + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            sigma + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))


def _sample_row(t, th, l1, r, rho, ops, K):
    L, _ = quadratures(ops, th)
    mx, mp, vx, cov, vp = moments(rho, ops)
    ml = expect(L, rho).real
    ml2 = expect(L @ L, rho).real
    return [t, th, l1, r, mx, mp, vx, cov, vp, ml, ml2, K]


def mlp_integrate(rho0: np.ndarray, bundle0: ScalarBundle, tau: float, t_f: float, dt: float,
                  lambda1_max: float, ops: OperatorSet, *, theta_fixed: float | None = None,
                  target: np.ndarray | None = None, shadow: bool = False):
    """Most-likely path with Pontryagin controls on the full density matrix.

    ``theta_fixed`` pins the quadrature angle (the θ = 0 benchmark) instead
    of maximizing over it. With ``shadow=True`` a costate consistent with
    ``bundle0`` is co-integrated with ``ρ`` by RK4 on the operator equations,
    and the largest gap between its trace-defined bundle and the integrated
    bundle is stored in ``MLPPath.shadow_drift``.

    Returns ``(MLPPath, ControlSchedule)``.
    """
    _check_ratio(dt, tau)
    n = n_steps_for(t_f, dt)
    theta_free = theta_fixed is None
    th_fix = float(theta_fixed or 0.0)
    y = bundle0.to_array()
    rho = rho0
    rows = []
    th_prev = optimal_theta(bundle0) if theta_free else th_fix

    if shadow:
        sigma = costate_from_bundle(rho0, y, ops)
        if sigma is None:
            raise ConfigError("no costate reproduces the initial bundle")
        rho_s = rho0.copy()
        drift = 0.0

    for k in range(n + 1):
        b = ScalarBundle.from_array(y)
        th_k = optimal_theta(b, th_prev) if theta_free else th_fix
        l1_k = float(kernels.optimal_lambda1_tied(b.k20, lambda1_max))
        r_k = float(np.cos(th_k) * b.g10 + np.sin(th_k) * b.g01)
        K = pontryagin_value(b, lambda1_max, tau).K
        rows.append(_sample_row(k * dt, th_k, l1_k, r_k, rho, ops, K))
        if shadow:
            drift = max(drift, float(np.max(np.abs(bundle_from_states(rho_s, sigma, ops).to_array() - y))))
        if k == n:
            break
        n_sub, h, ends, th_m, l1_s, r_m = kernels.bundle_step_nb(
            y, dt, tau, float(lambda1_max), theta_free, th_fix, th_k)
        for j in range(n_sub):
            p = StepParams(dt=float(h[j]), tau=tau, theta=float(th_m[j]), lambda1=float(l1_s[j]))
            rho = stratonovich_step(rho, float(r_m[j]), p, ops)
            if shadow:
                rho_s, sigma = _shadow_step(rho_s, sigma, float(h[j]), tau, float(l1_s[j]),
                                            theta_free, th_fix, float(th_m[j]), ops)
        y = ends[n_sub - 1].copy()
        th_prev = th_k

    cols = np.array(rows)
    path = MLPPath(columns=cols, final_state=rho, final_bundle=y,
                   J=cost_functional(cols[:, 3], cols[:, 9], cols[:, 10], tau, dt))
    if target is not None:
        path.fidelity = float(expect(rho, target).real)
    if shadow:
        path.shadow_drift = drift
    return path, path.schedule()


def pure_ket(rho: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Leading eigenvector of a pure ``ρ``; raises :class:`NonPureInput` otherwise."""
    w, v = np.linalg.eigh(rho)
    if abs(w[-1] - 1.0) > tol:
        raise NonPureInput(f"state purity {w[-1]:.3e} is not 1")
    psi = v[:, -1]
    # fix the global phase on the largest component
    j = int(np.argmax(np.abs(psi)))
    return psi * (abs(psi[j]) / psi[j])


def mlp_integrate_ket(psi0: np.ndarray, bundle0, tau: float, t_f: float, dt: float,
                      lambda1_max: float, *, theta_fixed: float | None = None,
                      target: np.ndarray | None = None, record: bool = True):
    """Compiled pure-state version of :func:`mlp_integrate`.

    Returns ``(MLPPath, ControlSchedule)``; with ``record=False`` the path
    holds only the final ket, bundle, ``J`` and fidelity.
    """
    _check_ratio(dt, tau)
    n = n_steps_for(t_f, dt)
    y0 = np.asarray(bundle0.to_array() if isinstance(bundle0, ScalarBundle) else bundle0, dtype=float)
    psi, y, J, rec = kernels.optimal_mlp_kernel(
        np.ascontiguousarray(psi0, dtype=np.complex128), y0, float(tau), float(dt), n,
        float(lambda1_max), theta_fixed is None, float(theta_fixed or 0.0), record)
    path = MLPPath(columns=rec if record else np.zeros((0, len(MLP_COLUMNS))),
                   final_ket=psi, final_bundle=y, J=float(J))
    if target is not None:
        path.fidelity = ket_overlap(psi, target)
    return path, (path.schedule() if record else None)


def ket_overlap(psi: np.ndarray, target: np.ndarray) -> float:
    if not np.all(np.isfinite(psi)):
        return 0.0
    return float(abs(np.vdot(target, psi)) ** 2)


def half_step_times(n_steps: int, dt: float) -> np.ndarray:
    return 0.5 * dt * np.arange(2 * n_steps + 1)


def scheduled_mlp_ket(psi0: np.ndarray, first_order0, theta_fn, lambda_fn, tau: float, t_f: float,
                      dt: float, *, target: np.ndarray | None = None, record: bool = True):
    """Most-likely path under prescribed controls ``θ(t)``, ``λ1(t)``.

    Only the first-order entries ``(Γ10, Γ01, κ10, κ01)`` are integrated;
    they close on themselves for any controls.
    """
    _check_ratio(dt, tau)
    n = n_steps_for(t_f, dt)
    th = half_step_times(n, dt)
    theta_half = np.ascontiguousarray(theta_fn(th), dtype=float)
    lam_half = np.ascontiguousarray(lambda_fn(th), dtype=float)
    psi, y, J, rec = kernels.scheduled_mlp_kernel(
        np.ascontiguousarray(psi0, dtype=np.complex128), np.asarray(first_order0, dtype=float),
        float(tau), float(dt), n, theta_half, lam_half, record)
    path = MLPPath(columns=rec if record else np.zeros((0, len(MLP_COLUMNS))),
                   final_ket=psi, final_bundle=y, J=float(J))
    if target is not None:
        path.fidelity = ket_overlap(psi, target)
    return path, (path.schedule() if record else None)


def scheduled_mlp_dense(rho0: np.ndarray, first_order0, theta_fn, lambda_fn, tau: float, t_f: float,
                        dt: float, ops: OperatorSet, *, target: np.ndarray | None = None):
    """Density-matrix reference for :func:`scheduled_mlp_ket`."""
    _check_ratio(dt, tau)
    n = n_steps_for(t_f, dt)
    y = np.asarray(first_order0, dtype=float)
    rho = rho0
    rows = []
    for k in range(n + 1):
        t = k * dt
        th_k, l1_k = float(theta_fn(t)), float(lambda_fn(t))
        r_k = float(np.cos(th_k) * y[0] + np.sin(th_k) * y[1])
        rows.append(_sample_row(t, th_k, l1_k, r_k, rho, ops, np.nan))
        if k == n:
            break
        th_m, l1_m = float(theta_fn(t + 0.5 * dt)), float(lambda_fn(t + 0.5 * dt))
        th_e, l1_e = float(theta_fn(t + dt)), float(lambda_fn(t + dt))
        k1 = first_order_rhs_array(y, th_k, l1_k, tau)
        k2 = first_order_rhs_array(y + 0.5 * dt * k1, th_m, l1_m, tau)
        k3 = first_order_rhs_array(y + 0.5 * dt * k2, th_m, l1_m, tau)
        k4 = first_order_rhs_array(y + dt * k3, th_e, l1_e, tau)
        y_new = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        r_m = float(np.cos(th_m) * 0.5 * (y[0] + y_new[0]) + np.sin(th_m) * 0.5 * (y[1] + y_new[1]))
        rho = stratonovich_step(rho, r_m, StepParams(dt=dt, tau=tau, theta=th_m, lambda1=l1_m), ops)
        y = y_new
    cols = np.array(rows)
    path = MLPPath(columns=cols, final_state=rho, final_bundle=y,
                   J=cost_functional(cols[:, 3], cols[:, 9], cols[:, 10], tau, dt))
    if target is not None:
        path.fidelity = float(expect(rho, target).real)
    return path, path.schedule()


def integrate_bundle(bundle0: ScalarBundle, theta: float, lambda1: float, tau: float,
                     dt: float, n_steps: int) -> np.ndarray:
    """Bundle history under constant controls, shape ``(n_steps + 1, 10)``."""
    out = np.empty((n_steps + 1, 10))
    y = bundle0.to_array()
    out[0] = y
    for k in range(n_steps):
        y = rk4(bundle_rhs_array, y, dt, theta, lambda1, tau)
        out[k + 1] = y
    return out


__all__ = [
    "ControlSchedule", "MLPPath", "cost_functional", "mlp_integrate", "mlp_integrate_ket",
    "scheduled_mlp_ket", "scheduled_mlp_dense", "pure_ket", "ket_overlap", "integrate_bundle",
]
