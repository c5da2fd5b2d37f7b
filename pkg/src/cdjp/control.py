"""Shooting solvers for fixed-endpoint state preparation.

``anneal_optimal`` searches the ten initial bundle values whose Pontryagin
most-likely path ends closest to the target. Once a candidate clears the
fidelity gate the search switches to a Pareto phase that only accepts moves
keeping the gate and strictly lowering the readout cost ``J``.

``anneal_sample_control`` maximizes fidelity alone over tanh-bounded Fourier
controls, which give a feasible but generally non-optimal comparison schedule.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bundle import ScalarBundle, bundle_from_moments
from .errors import ConfigError, DimensionMismatch
from .fock import ket_moments, ket_to_dm
from .mlp import ket_overlap, mlp_integrate_ket, pure_ket, scheduled_mlp_ket
from .paths import ControlSchedule, MLPPath
from .sme import StepParams, n_steps_for, stratonovich_step

SCHEMA_VERSION = 1


@dataclass
class ShootingProblem:
    """Endpoints and physical parameters of one state-preparation task."""

    rho0: np.ndarray
    rho_target: np.ndarray
    tau: float = 15.0
    t_f: float = 3.0
    dt: float = 1e-3
    lambda1_max: float = 0.2
    fidelity_gate: float = 0.92
    name: str = "custom"
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rho0.shape != self.rho_target.shape:
            raise DimensionMismatch(f"{self.rho0.shape} vs {self.rho_target.shape}")
        if not 0 < self.fidelity_gate < 1:
            raise ConfigError("fidelity_gate must lie in (0, 1)")
        if self.lambda1_max < 0:
            raise ConfigError("lambda1_max must be non-negative")
        StepParams(dt=self.dt, tau=self.tau)
        n_steps_for(self.t_f, self.dt)
        self.psi0 = pure_ket(self.rho0)
        self.psi_target = pure_ket(self.rho_target)

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.t_f, self.dt)

    @property
    def n_levels(self) -> int:
        return self.rho0.shape[0]

    def identity_bundle(self) -> ScalarBundle:
        """The ``σ = 𝟙`` point: κ = 0 and Γ equal to the plain moments of ``ρ0``."""
        from .fock import build_operators
        return bundle_from_moments(*ket_moments(self.psi0, build_operators(self.n_levels)))

    def fingerprint(self) -> dict:
        return {
            "name": self.name, "tau": self.tau, "t_f": self.t_f, "dt": self.dt,
            "lambda1_max": self.lambda1_max, "fidelity_gate": self.fidelity_gate,
            "n_levels": self.n_levels, "description": self.description,
        }

    def hash(self) -> str:
        h = hashlib.sha256(json.dumps(self.fingerprint(), sort_keys=True).encode())
        h.update(np.ascontiguousarray(np.round(self.rho0, 14)).tobytes())
        h.update(np.ascontiguousarray(np.round(self.rho_target, 14)).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class AnnealConfig:
    """Geometric-cooling schedule; ``max_levels`` bounds the temperature ladder.

    Restart 0 starts at the given point. Restart ``r > 0`` starts from a
    Gaussian displacement of width ``restart_spread · 2^((r-1) mod 4 - 1)``
    per unit of coordinate scale, so the restarts probe basins at four
    distances from the start point.
    """

    initial_temperature: float = 1.0
    cooling_rate: float = 0.97
    steps_per_temperature: int = 200
    proposal_scale: float = 0.05
    restarts: int = 8
    seed: int = 0
    max_levels: int = 400
    min_temperature: float = 1e-7
    restart_spread: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.cooling_rate < 1:
            raise ConfigError("cooling_rate must lie in (0, 1)")
        for name in ("initial_temperature", "steps_per_temperature", "proposal_scale", "restarts",
                     "max_levels", "min_temperature", "restart_spread", "workers"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def n_levels_effective(self) -> int:
        by_temp = math.ceil(math.log(self.min_temperature / self.initial_temperature)
                            / math.log(self.cooling_rate))
        return max(1, min(self.max_levels, by_temp))


@dataclass
class AnnealTrace:
    """Best-so-far history of one restart."""

    restart: int
    evaluations: int = 0
    phase1_best: list = field(default_factory=list)  # non-decreasing fidelity per level
    phase2_accepted_J: list = field(default_factory=list)  # strictly decreasing
    reached_gate_at: int | None = None


@dataclass
class AnnealResult:
    x: np.ndarray
    fidelity: float
    J: float
    converged: bool
    traces: list
    evaluations: int
    seconds: float


def _better(a, b, gate):
    """Is candidate ``a = (F, J)`` preferable to ``b`` under the gate rule?"""
    a_ok, b_ok = a[0] >= gate, b[0] >= gate
    if a_ok != b_ok:
        return a_ok
    if a_ok:
        return a[1] < b[1]
    return a[0] > b[0]


def _anneal_restart(evaluate, x0, scale, cfg: AnnealConfig, gate: float, restart: int):
    rng = np.random.Generator(np.random.Philox(key=np.array([cfg.seed, restart], dtype=np.uint64)))
    trace = AnnealTrace(restart=restart)
    x = np.array(x0, dtype=float)
    if restart > 0:
        x = x + scale * rng.standard_normal(x.size) * cfg.restart_spread * 2.0 ** ((restart - 1) % 4 - 1)
    f_cur, j_cur = evaluate(x)
    trace.evaluations += 1
    best = (x.copy(), f_cur, j_cur)
    phase2 = f_cur >= gate
    if phase2:
        trace.reached_gate_at = 0
    step = cfg.proposal_scale
    T = cfg.initial_temperature
    for level in range(cfg.n_levels_effective):
        accepted = 0
        for _ in range(cfg.steps_per_temperature):
            xn = x + step * scale * rng.standard_normal(x.size)
            fn, jn = evaluate(xn)
            trace.evaluations += 1
            if not phase2:
                delta = f_cur - fn  # change of 1 - F
                ok = delta <= 0 or rng.random() < math.exp(-delta / T)
                if fn >= gate:
                    ok = True
                    phase2 = True
                    trace.reached_gate_at = trace.evaluations
            else:
                ok = fn >= gate and jn < j_cur
            if ok:
                x, f_cur, j_cur = xn, fn, jn
                accepted += 1
                if phase2:
                    trace.phase2_accepted_J.append(j_cur)
                if _better((f_cur, j_cur), best[1:], gate):
                    best = (x.copy(), f_cur, j_cur)
        trace.phase1_best.append(best[1] if best[1] < gate else gate)
        rate = accepted / cfg.steps_per_temperature
        if rate > 0.4:
            step = min(step * 1.25, 10.0)
        elif rate < 0.15:
            step = max(step * 0.7, 1e-6)
        T *= cfg.cooling_rate
        if T < cfg.min_temperature:
            break
    return best, trace


def simulated_annealing(evaluate, x0, scale, cfg: AnnealConfig, gate: float) -> AnnealResult:
    """Run ``cfg.restarts`` independent restarts and keep the preferred result.

    ``evaluate(x) -> (fidelity, J)`` must be side-effect free. A gate above 1
    disables the Pareto phase, leaving a pure fidelity maximizer. Restarts run
    on a thread pool when ``cfg.workers > 1`` (the compiled kernels release
    the GIL).
    """
    t0 = time.perf_counter()
    scale = np.asarray(scale, dtype=float)
    jobs = range(cfg.restarts)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda r: _anneal_restart(evaluate, x0, scale, cfg, gate, r), jobs))
    else:
        results = [_anneal_restart(evaluate, x0, scale, cfg, gate, r) for r in jobs]
    # reduce in restart order so the answer does not depend on scheduling
    best = results[0][0]
    for b, _ in results[1:]:
        if _better(b[1:], best[1:], gate):
            best = b
    traces = [t for _, t in results]
    return AnnealResult(x=best[0], fidelity=float(best[1]), J=float(best[2]), converged=best[1] >= gate,
                        traces=traces, evaluations=sum(t.evaluations for t in traces),
                        seconds=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# optimal control


@dataclass
class OptimalControlSolution:
    bundle0: ScalarBundle
    path: MLPPath | None
    schedule: ControlSchedule | None
    fidelity: float
    J: float
    converged: bool
    provenance: dict = field(default_factory=dict)

    kind = "optimal"

    def to_dict(self, problem: ShootingProblem | None = None) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION, "kind": self.kind, "status":
                "converged" if self.converged else "NoConvergence",
            "bundle0": self.bundle0.to_dict(), "fidelity": self.fidelity, "J": self.J,
            "provenance": self.provenance,
        }
        if problem is not None:
            out["problem"] = problem.fingerprint()
            out["problem_hash"] = problem.hash()
        if self.schedule is not None:
            out["schedule"] = self.schedule.to_dict()
        return out


def _optimal_evaluator(problem: ShootingProblem):
    psi0, tgt = problem.psi0, problem.psi_target

    def evaluate(x):
        path, _ = mlp_integrate_ket(psi0, x, problem.tau, problem.t_f, problem.dt,
                                    problem.lambda1_max, target=tgt, record=False)
        if not (math.isfinite(path.J) and math.isfinite(path.fidelity)):
            return 0.0, math.inf
        return path.fidelity, path.J

    return evaluate


BUNDLE_SCALE = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])


def anneal_optimal(problem: ShootingProblem, cfg: AnnealConfig, x0=None) -> OptimalControlSolution:
    """Anneal the initial bundle; the start point defaults to the ``σ = 𝟙`` bundle."""
    x0 = problem.identity_bundle().to_array() if x0 is None else np.asarray(x0, dtype=float)
    res = simulated_annealing(_optimal_evaluator(problem), x0, BUNDLE_SCALE, cfg, problem.fidelity_gate)
    bundle0 = ScalarBundle.from_array(res.x)
    path, schedule = mlp_integrate_ket(problem.psi0, bundle0, problem.tau, problem.t_f, problem.dt,
                                       problem.lambda1_max, target=problem.psi_target)
    prov = _provenance(cfg, res, problem)
    return OptimalControlSolution(bundle0=bundle0, path=path, schedule=schedule, fidelity=path.fidelity,
                                  J=path.J, converged=path.fidelity >= problem.fidelity_gate, provenance=prov)


def _provenance(cfg: AnnealConfig, res: AnnealResult, problem: ShootingProblem) -> dict:
    return {
        "anneal_config": asdict(cfg), "evaluations": res.evaluations, "seconds": round(res.seconds, 3),
        "problem_hash": problem.hash(),
        "restarts": [
            {"restart": t.restart, "evaluations": t.evaluations, "reached_gate_at": t.reached_gate_at,
             "phase2_accepts": len(t.phase2_accepted_J),
             "final_J": t.phase2_accepted_J[-1] if t.phase2_accepted_J else None}
            for t in res.traces
        ],
    }


# ---------------------------------------------------------------------------
# sample control


@dataclass
class FourierControl:
    """``θ = (π/2) tanh(2 f1/π)``, ``λ1 = λmax tanh(f2/λmax)`` with Fourier ``f1, f2``.

    ``c, d`` (and ``c2, d2``) hold the cosine and sine coefficients for
    ``n = 0..n_c`` of ``f1`` (and ``f2``). ``first_order0`` holds the initial
    ``(Γ10, Γ01, κ10, κ01)`` of the path, which the readout depends on.
    """

    c: np.ndarray
    d: np.ndarray
    c2: np.ndarray
    d2: np.ndarray
    lambda1_max: float
    t_i: float = 0.0
    t_f: float = 3.0
    first_order0: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        for name in ("c", "d", "c2", "d2", "first_order0"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.c.shape == self.d.shape == self.c2.shape == self.d2.shape):
            raise ValueError("coefficient arrays must share a length")

    @property
    def n_c(self) -> int:
        return self.c.size - 1

    def _series(self, t, a, b):
        t = np.asarray(t, dtype=float)
        n = np.arange(self.n_c + 1)
        arg = 2 * np.pi * np.multiply.outer(t - self.t_i, n) / (self.t_f - self.t_i)
        return np.cos(arg) @ a + np.sin(arg) @ b

    def theta(self, t):
        return 0.5 * np.pi * np.tanh(2 * self._series(t, self.c, self.d) / np.pi)

    def lambda1(self, t):
        if self.lambda1_max == 0:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.lambda1_max * np.tanh(self._series(t, self.c2, self.d2) / self.lambda1_max)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.c, self.d, self.c2, self.d2, self.first_order0])

    @classmethod
    def from_vector(cls, x, n_c: int, lambda1_max: float, t_i: float = 0.0, t_f: float = 3.0):
        k = n_c + 1
        x = np.asarray(x, dtype=float)
        if x.size != 4 * k + 4:
            raise ValueError(f"expected {4 * k + 4} values for n_c={n_c}")
        return cls(x[:k], x[k:2 * k], x[2 * k:3 * k], x[3 * k:4 * k], lambda1_max, t_i, t_f, x[4 * k:])

    def to_dict(self) -> dict:
        return {"c": self.c.tolist(), "d": self.d.tolist(), "c2": self.c2.tolist(), "d2": self.d2.tolist(),
                "lambda1_max": self.lambda1_max, "t_i": self.t_i, "t_f": self.t_f,
                "first_order0": self.first_order0.tolist(), "n_c": self.n_c}

    @classmethod
    def from_dict(cls, d: dict) -> "FourierControl":
        return cls(d["c"], d["d"], d["c2"], d["d2"], d["lambda1_max"], d.get("t_i", 0.0), d.get("t_f", 3.0),
                   d.get("first_order0", [0, 0, 0, 0]))


@dataclass
class SampleControlSolution:
    control: FourierControl
    path: MLPPath | None
    schedule: ControlSchedule | None
    fidelity: float
    J: float
    converged: bool
    provenance: dict = field(default_factory=dict)

    kind = "sample"

    def to_dict(self, problem: ShootingProblem | None = None) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION, "kind": self.kind,
            "status": "converged" if self.converged else "NoConvergence",
            "fourier": self.control.to_dict(), "fidelity": self.fidelity, "J": self.J,
            "provenance": self.provenance,
        }
        if problem is not None:
            out["problem"] = problem.fingerprint()
            out["problem_hash"] = problem.hash()
        if self.schedule is not None:
            out["schedule"] = self.schedule.to_dict()
        return out


def run_fourier(control: FourierControl, problem: ShootingProblem, record: bool = True):
    return scheduled_mlp_ket(problem.psi0, control.first_order0, control.theta, control.lambda1,
                             problem.tau, problem.t_f, problem.dt, target=problem.psi_target, record=record)


def anneal_sample_control(problem: ShootingProblem, cfg: AnnealConfig, n_c: int = 5,
                          x0=None) -> SampleControlSolution:
    """Anneal Fourier coefficients and the initial first-order bundle for maximum fidelity.

    There is no Pareto phase: the search only maximizes fidelity. The
    result counts as converged when it reaches the problem's gate.
    """
    k = n_c + 1
    if x0 is None:
        b = problem.identity_bundle()
        x0 = np.concatenate([np.zeros(4 * k), [b.g10, b.g01, 0.0, 0.0]])
    scale = np.concatenate([np.full(2 * k, 0.5), np.full(2 * k, 0.2 if problem.lambda1_max else 0.0),
                            np.ones(4)])

    def evaluate(x):
        ctl = FourierControl.from_vector(x, n_c, problem.lambda1_max, 0.0, problem.t_f)
        path, _ = run_fourier(ctl, problem, record=False)
        if not (math.isfinite(path.J) and math.isfinite(path.fidelity)):
            return 0.0, math.inf
        return path.fidelity, path.J

    res = simulated_annealing(evaluate, np.asarray(x0, dtype=float), scale, cfg, math.inf)
    ctl = FourierControl.from_vector(res.x, n_c, problem.lambda1_max, 0.0, problem.t_f)
    path, schedule = run_fourier(ctl, problem)
    return SampleControlSolution(control=ctl, path=path, schedule=schedule, fidelity=path.fidelity, J=path.J,
                                 converged=path.fidelity >= problem.fidelity_gate,
                                 provenance=_provenance(cfg, res, problem))


# ---------------------------------------------------------------------------
# re-evaluation


def replay_schedule(schedule: ControlSchedule, problem: ShootingProblem, ops):
    """Integrate ``ρ`` along a stored readout ``r(t)`` with its controls held per step."""
    if schedule.r is None:
        raise ValueError("schedule carries no readout")
    n = problem.n_steps
    theta, lam = schedule.step_controls(n, problem.dt)
    r_steps = schedule.r[:n] if schedule.r.size > n else schedule.r
    rho = problem.rho0
    for k in range(n):
        p = StepParams(dt=problem.dt, tau=problem.tau, theta=float(theta[k]), lambda1=float(lam[k]))
        rho = stratonovich_step(rho, float(r_steps[k]), p, ops)
    return rho


def evaluate_control(control, problem: ShootingProblem, ops=None) -> dict:
    """Deterministic re-computation of fidelity, ``J`` and the path for a stored control."""
    if isinstance(control, OptimalControlSolution):
        control = control.bundle0
    if isinstance(control, SampleControlSolution):
        control = control.control
    if isinstance(control, ScalarBundle):
        path, _ = mlp_integrate_ket(problem.psi0, control, problem.tau, problem.t_f, problem.dt,
                                    problem.lambda1_max, target=problem.psi_target)
        return {"fidelity": path.fidelity, "J": path.J, "path": path}
    if isinstance(control, FourierControl):
        path, _ = run_fourier(control, problem)
        return {"fidelity": path.fidelity, "J": path.J, "path": path}
    if isinstance(control, ControlSchedule):
        from .fock import build_operators
        rho = replay_schedule(control, problem, ops or build_operators(problem.n_levels))
        fid = float(np.real(np.vdot(problem.psi_target, rho @ problem.psi_target)))
        return {"fidelity": fid, "J": None, "path": None, "final_state": rho}
    raise TypeError(f"cannot evaluate {type(control).__name__}")


# ---------------------------------------------------------------------------
# serialization


def save_solution(solution, problem: ShootingProblem, path, extra: dict | None = None) -> Path:
    d = solution.to_dict(problem)
    if extra:
        d.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(d, indent=1), encoding="utf-8")
    return path


def load_solution(path) -> dict:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("schema_version") != SCHEMA_VERSION or d.get("kind") not in ("optimal", "sample"):
        raise ConfigError(f"{path}: not a solution document")
    return d


def control_from_document(d: dict):
    if d["kind"] == "optimal":
        return ScalarBundle(**d["bundle0"])
    return FourierControl.from_dict(d["fourier"])


def solution_from_document(d: dict, problem: ShootingProblem):
    """Rebuild a solution object by re-running the stored control (never re-solving)."""
    control = control_from_document(d)
    ev = evaluate_control(control, problem)
    path = ev["path"]
    conv = d.get("status") == "converged"
    if d["kind"] == "optimal":
        return OptimalControlSolution(control, path, path.schedule(), ev["fidelity"], ev["J"], conv,
                                      d.get("provenance", {}))
    return SampleControlSolution(control, path, path.schedule(), ev["fidelity"], ev["J"], conv,
                                 d.get("provenance", {}))


def ket_fidelity_of(rho, psi_target) -> float:
    return ket_overlap(pure_ket(rho), psi_target)


__all__ = [
    "ShootingProblem", "AnnealConfig", "anneal_optimal", "anneal_sample_control", "FourierControl",
    "evaluate_control", "simulated_annealing", "save_solution", "load_solution", "solution_from_document",
    "ket_to_dm",
]
