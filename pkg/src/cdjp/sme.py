"""Positivity-preserving steppers for the conditional state and seeded noise.

``stratonovich_step`` drives most-likely paths with a smooth readout ``r``;
``ito_step`` produces stochastic trajectories with ``r = ⟨L⟩ + √τ dW/dt``.
Both apply a Kraus operator ``M`` and renormalize, so ``ρ`` stays positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, PositivityLoss
from .fock import OperatorSet, expect, hamiltonian, moments, quadratures, symmetrize
from .paths import ControlSchedule, TrajectoryRecord

WEAK_RATIO_MAX = 0.01
POSITIVITY_TOL = 1e-6


@dataclass(frozen=True)
class StepParams:
    """One step's timing and controls; requires ``dt/τ < 0.01``."""

    dt: float = 1e-3
    tau: float = 15.0
    theta: float = 0.0
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0 and self.tau > 0):
            raise ConfigError(f"dt and tau must be positive, got dt={self.dt}, tau={self.tau}")
        if math.isfinite(self.tau) and self.dt / self.tau >= WEAK_RATIO_MAX:
            raise ConfigError(f"dt/tau = {self.dt / self.tau:.3g} is outside the weak-measurement regime")


def taylor4_propagator(H: np.ndarray, dt: float) -> np.ndarray:
    """``Σ_{j<=4} (-iH dt)^j / j!``."""
    A = -1j * dt * H
    out = np.eye(H.shape[0], dtype=complex)
    term = out.copy()
    for j in range(1, 5):
        term = term @ A / j
        out = out + term
    return out


def _finish(rho_new: np.ndarray, check: bool) -> np.ndarray:
    rho_new = symmetrize(rho_new)
    rho_new = rho_new / np.trace(rho_new).real
    if check:
        w0 = float(np.linalg.eigvalsh(rho_new)[0])
        if w0 < -POSITIVITY_TOL:
            raise PositivityLoss(f"minimum eigenvalue {w0:.3e}; reduce dt", min_eigenvalue=w0)
    return rho_new


def stratonovich_kraus(r: float, p: StepParams, ops: OperatorSet) -> np.ndarray:
    """``U(dt) M`` with ``M = 1 + (r dt/2τ) L - (dt/4τ) L²``."""
    L, _ = quadratures(ops, p.theta)
    M = ops.identity + (r * p.dt / (2 * p.tau)) * L - (p.dt / (4 * p.tau)) * (L @ L)
    U = taylor4_propagator(hamiltonian(ops, p.lambda1, p.lambda2), p.dt)
    return U @ M


def stratonovich_step(rho: np.ndarray, r: float, p: StepParams, ops: OperatorSet,
                      check: bool = True) -> np.ndarray:
    """Advance ``ρ`` by ``dt`` along a readout ``r`` (Stratonovich form)."""
    K = stratonovich_kraus(r, p, ops)
    return _finish(K @ rho @ K.conj().T, check)


def ito_kraus(rho: np.ndarray, dW: float, p: StepParams, ops: OperatorSet):
    L, _ = quadratures(ops, p.theta)
    r = float(expect(L, rho).real + math.sqrt(p.tau) * dW / p.dt)
    H = hamiltonian(ops, p.lambda1, p.lambda2)
    M = ops.identity - 1j * p.dt * H + (r * p.dt / (2 * p.tau)) * L - (p.dt / (8 * p.tau)) * (L @ L)
    return M, r


def ito_step(rho: np.ndarray, dW: float, p: StepParams, ops: OperatorSet,
             check: bool = True) -> tuple[np.ndarray, float]:
    """Advance ``ρ`` by one Itô step; returns the new state and the readout used."""
    M, r = ito_kraus(rho, dW, p, ops)
    return _finish(M @ rho @ M.conj().T, check), r


def lindblad_rhs(rho: np.ndarray, p: StepParams, ops: OperatorSet) -> np.ndarray:
    """Unconditional evolution ``-i[H,ρ] + (1/4τ)(LρL - ½[L², ρ]_+)``."""
    L, _ = quadratures(ops, p.theta)
    H = hamiltonian(ops, p.lambda1, p.lambda2)
    L2 = L @ L
    return -1j * (H @ rho - rho @ H) + (L @ rho @ L - 0.5 * (L2 @ rho + rho @ L2)) / (4 * p.tau)


@dataclass(frozen=True)
class NoiseStream:
    """Wiener increments keyed on ``(seed, stream_id)``.

    Philox is counter-based: the key pins the stream and the counter walks
    the step index, so step ``k`` of stream ``i`` never depends on other
    streams.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def increments(self, n_steps: int, dt: float) -> np.ndarray:
        return math.sqrt(dt) * self.generator().standard_normal(n_steps)


def n_steps_for(t_f: float, dt: float) -> int:
    n = round(t_f / dt)
    if n < 0 or abs(n * dt - t_f) > 1e-9 * max(1.0, t_f):
        raise ConfigError(f"t_f={t_f} is not an integer number of steps dt={dt}")
    return int(n)


def simulate_trajectory(rho0: np.ndarray, schedule: ControlSchedule, tau: float, t_f: float,
                        dt: float, noise: NoiseStream, ops: OperatorSet,
                        target: np.ndarray | None = None) -> TrajectoryRecord:
    """Dense Itô trajectory; control sample ``k`` is held over ``[t_k, t_k + dt)``."""
    n = n_steps_for(t_f, dt)
    theta, lam = schedule.step_controls(n, dt)
    dw = noise.increments(n, dt)
    rows = np.zeros((n + 1, 7))
    rho = rho0
    rows[0, 0] = 0.0
    rows[0, 1:6] = moments(rho, ops)
    rows[:, 6] = np.nan
    for k in range(n):
        p = StepParams(dt=dt, tau=tau, theta=float(theta[k]), lambda1=float(lam[k]))
        try:
            rho, r = ito_step(rho, float(dw[k]), p, ops)
        except PositivityLoss as exc:
            exc.step = k
            raise
        rows[k, 6] = r
        rows[k + 1, 0] = (k + 1) * dt
        rows[k + 1, 1:6] = moments(rho, ops)
    fid = None if target is None else float(expect(rho, target).real)
    return TrajectoryRecord(columns=rows, final_state=rho, final_fidelity=fid,
                            seed=noise.seed, stream_id=noise.stream_id)
