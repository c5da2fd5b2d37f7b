"""Closed-form Gaussian oracles for position measurement (``θ = 0``).

Coordinates follow ``q1 = ⟨X⟩``, ``q2 = ⟨P⟩``, ``q3 = 2 Var X``,
``q4 = 2 Cov(X, P)``, ``q5 = 2 Var P``. Under continuous position
measurement the covariances settle to fixed values ``(q̃3, q̃4, q̃5)``; with
the covariances frozen there the most-likely path of the means is unique and
given in closed form by two integration constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import ScalarBundle, bundle_from_states
from .errors import NonPureInput, SingularMatrix
from .fock import build_operators, make_ket, moments, ket_to_dm
from .mlp import mlp_integrate_ket

PURITY_TOL = 1e-8
COND_MAX = 1e12


@dataclass(frozen=True)
class GaussCoords:
    q1: float
    q2: float
    q3: float
    q4: float
    q5: float

    def __post_init__(self):
        if not (self.q3 > 0 and self.q5 > 0):
            raise ValueError("q3 and q5 must be positive")
        if self.q3 * self.q5 - self.q4**2 < 1 - 1e-9:
            raise ValueError("q3*q5 - q4**2 must be at least 1")

    @classmethod
    def from_moments(cls, mean_x, mean_p, var_x, cov, var_p) -> "GaussCoords":
        return cls(mean_x, mean_p, 2 * var_x, 2 * cov, 2 * var_p)


@dataclass(frozen=True)
class OPConstants:
    alpha1: float
    alpha2: float


def steady_state_covariances(tau: float) -> tuple[float, float, float]:
    """``(q̃3, q̃4, q̃5)`` reached under continuous position measurement."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    root = np.sqrt(1 + 4 * tau * tau)
    # root - 2τ loses all digits for large τ; 1/(root + 2τ) is the same number
    q4 = 1.0 / (root + 2 * tau)
    q3 = np.sqrt(4 * tau * q4)
    q5 = np.sqrt(q4 * (1 + 4 * tau * tau) / tau)
    return float(q3), float(q4), float(q5)


def squeezing_hyperbolics(q3: float, q4: float, q5: float, branch: int = 1) -> tuple[float, float]:
    """``(sinh 2R, cosh 2R)``; ``branch`` picks the sign of ``sinh 2R``."""
    sh = branch * np.hypot(0.5 * (q5 - q3), q4)
    ch = 0.5 * (q5 + q3)
    return float(sh), float(ch)


def squeezing_parameter(q3: float, q4: float, q5: float, branch: int = 1) -> complex:
    """``ξ = R e^{iΘ} = (R / sinh 2R)((q5 - q3)/2 - i q4)`` for a pure Gaussian state.

    ``R = ½ log(sinh 2R + cosh 2R)``; both branches of ``sinh 2R`` give the
    same ``ξ`` because ``R/sinh 2R`` is even.
    """
    purity = q3 * q5 - q4 * q4
    if abs(purity - 1.0) > PURITY_TOL:
        raise NonPureInput(f"q3*q5 - q4^2 = {purity!r}, expected 1")
    sh, ch = squeezing_hyperbolics(q3, q4, q5, branch)
    if abs(sh) < 1e-14:
        return 0j
    R = 0.5 * np.log(sh + ch)
    return complex(R / sh * (0.5 * (q5 - q3) - 1j * q4))


def op_matrix(t_f: float, tau: float, q3: float, q4: float) -> np.ndarray:
    """Linear map from ``(α1, α2)`` to the rotated endpoint displacement."""
    S = q3 * q3 + q4 * q4
    D = q3 * q3 - q4 * q4
    c, s = np.cos(t_f), np.sin(t_f)
    return np.array([
        [S * t_f * c + D * s, (S * t_f + 2 * q3 * q4) * s],
        [(-S * t_f + 2 * q3 * q4) * s, S * t_f * c - D * s],
    ]) / (8 * tau)


def closed_form_op(q_i, q_f, t_f: float, tau: float):
    """Unique optimal path of the means between ``q_i`` and ``q_f``.

    Returns ``(OPConstants, path)`` with ``path(t) -> (q1(t), q2(t))``.
    Raises :class:`SingularMatrix` if the 2×2 system is numerically singular.
    """
    if t_f <= 0:
        raise ValueError("t_f must be positive")
    q3, q4, _ = steady_state_covariances(tau)
    q1i, q2i = map(float, q_i)
    q1f, q2f = map(float, q_f)
    A = op_matrix(t_f, tau, q3, q4)
    if np.linalg.cond(A) > COND_MAX:
        raise SingularMatrix(f"endpoint matrix is singular at t_f={t_f}")
    c, s = np.cos(t_f), np.sin(t_f)
    rhs = np.array([q1f - q1i * c - q2i * s, q2f + q1i * s - q2i * c])
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    a1 = (A[1, 1] * rhs[0] - A[0, 1] * rhs[1]) / det
    a2 = (A[0, 0] * rhs[1] - A[1, 0] * rhs[0]) / det
    const = OPConstants(float(a1), float(a2))
    S = q3 * q3 + q4 * q4
    D = q3 * q3 - q4 * q4

    def path(t):
        t = np.asarray(t, dtype=float)
        ct, st = np.cos(t), np.sin(t)
        q1 = (a1 * S / (8 * tau) * t + q1i) * ct + (
            a2 * S / (8 * tau) * t + q2i + a1 * D / (8 * tau) + q3 * q4 * a2 / (4 * tau)) * st
        q2 = (a2 * S / (8 * tau) * t + q2i) * ct - (
            a1 * S / (8 * tau) * t + q1i + a2 * D / (8 * tau) - q3 * q4 * a1 / (4 * tau)) * st
        return q1, q2

    return const, path


# ---------------------------------------------------------------------------
# cross-check against the general most-likely-path integrator


def linear_costate(rho, ops, a: float, b: float) -> np.ndarray:
    """``σ = 1 + a(X - ⟨X⟩) + b(P - ⟨P⟩)``; keeps ``⟨σ⟩ = 1``."""
    mx, mp, *_ = moments(rho, ops)
    return ops.identity + a * (ops.x - mx * ops.identity) + b * (ops.p - mp * ops.identity)


@dataclass
class Theta0Benchmark:
    tau: float
    t_f: float
    q_i: tuple
    q_f: tuple
    constants: OPConstants
    costate_ab: tuple
    bundle0: ScalarBundle
    t: np.ndarray
    mlp_x: np.ndarray
    mlp_p: np.ndarray
    mlp_cov: np.ndarray
    exact_x: np.ndarray
    exact_p: np.ndarray
    fidelity: float

    @property
    def max_mean_deviation(self) -> float:
        return float(max(np.max(np.abs(self.mlp_x - self.exact_x)), np.max(np.abs(self.mlp_p - self.exact_p))))

    def overlay_rows(self):
        q3, q4, q5 = steady_state_covariances(self.tau)
        for k in range(self.t.size):
            yield (self.t[k], self.mlp_x[k], self.mlp_p[k], self.exact_x[k], self.exact_p[k],
                   *self.mlp_cov[k], 0.5 * q3, 0.5 * q4, 0.5 * q5)


OVERLAY_COLUMNS = ("t", "mlp_x", "mlp_p", "exact_x", "exact_p", "mlp_var_x", "mlp_cov", "mlp_var_p",
                   "steady_var_x", "steady_cov", "steady_var_p")


def theta0_benchmark(tau: float = 15.0, t_f: float = 3.0, dt: float = 1e-3, q_f=(1.0, 0.5),
                     n_levels: int = 36, newton_iters: int = 3) -> Theta0Benchmark:
    """General most-likely path at ``θ ≡ 0``, ``λ1 = 0`` versus the closed form.

    Starts from the steady-state squeezed vacuum and targets the squeezed
    coherent state with means ``q_f``. The costate is taken linear,
    ``σ = 1 + aΔX + bΔP``, which spans the first-order bundle; ``(a, b)`` is
    fixed by Newton shooting on the endpoint means (the map is affine up to
    truncation, so it converges in one iteration).
    """
    ops = build_operators(n_levels)
    q3, q4, q5 = steady_state_covariances(tau)
    xi = squeezing_parameter(q3, q4, q5)
    psi0 = make_ket("squeezed_vacuum", n_levels, xi=xi)
    alpha_f = (q_f[0] + 1j * q_f[1]) / np.sqrt(2)
    target = make_ket("squeezed_coherent", n_levels, xi=xi, alpha=alpha_f)
    rho0 = ket_to_dm(psi0)
    q_i = moments(rho0, ops)[:2]

    def run(ab, record=False):
        b0 = bundle_from_states(rho0, linear_costate(rho0, ops, *ab), ops)
        path, _ = mlp_integrate_ket(psi0, b0, tau, t_f, dt, 0.0, theta_fixed=0.0,
                                    target=target, record=record)
        return b0, path

    def endpoint(ab):
        _, path = run(ab)
        m = moments(ket_to_dm(path.final_ket), ops)
        return np.array(m[:2])

    ab = np.zeros(2)
    goal = np.array(q_f, dtype=float)
    h = 1e-3
    for _ in range(newton_iters):
        f0 = endpoint(ab)
        if np.max(np.abs(f0 - goal)) < 1e-12:
            break
        jac = np.column_stack([(endpoint(ab + h * e) - f0) / h for e in np.eye(2)])
        ab = ab + np.linalg.solve(jac, goal - f0)
    b0, path = run(ab, record=True)
    const, exact = closed_form_op(q_i, q_f, t_f, tau)
    ex, ep = exact(path.t)
    return Theta0Benchmark(
        tau=tau, t_f=t_f, q_i=tuple(map(float, q_i)), q_f=tuple(map(float, q_f)), constants=const,
        costate_ab=(float(ab[0]), float(ab[1])), bundle0=b0, t=path.t,
        mlp_x=path.col("x"), mlp_p=path.col("p"),
        mlp_cov=np.column_stack([path.col("var_x"), path.col("cov"), path.col("var_p")]),
        exact_x=ex, exact_p=ep, fidelity=float(path.fidelity),
    )
