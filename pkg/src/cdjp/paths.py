"""Sampled paths, control schedules and their CSV layouts."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MLP_COLUMNS = ("t", "theta", "lambda1", "r", "x", "p", "var_x", "cov", "var_p", "mean_l", "mean_l2", "K")
TRAJ_COLUMNS = ("t", "x", "p", "var_x", "cov", "var_p", "r")


def write_csv(path, header, rows, comments: dict | None = None) -> Path:
    """Write a header plus rows; ``comments`` go on leading ``#`` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for k, v in (comments or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.array([[float(v) for v in ln.strip().split(",")] for ln in lines[1:] if ln.strip()])
    return header, data.reshape(-1, len(header))


@dataclass
class ControlSchedule:
    """Controls sampled at times ``t``; sample ``k`` holds until the next sample."""

    t: np.ndarray
    theta: np.ndarray
    lambda1: np.ndarray
    r: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.lambda1 = np.asarray(self.lambda1, dtype=float)
        if self.r is not None:
            self.r = np.asarray(self.r, dtype=float)
        if not (self.t.shape == self.theta.shape == self.lambda1.shape):
            raise ValueError("t, theta and lambda1 must have the same length")
        if self.t.size and np.any(np.diff(self.t) <= 0):
            raise ValueError("sample times must increase")

    @classmethod
    def constant(cls, t_f: float, dt: float, theta: float = 0.0, lambda1: float = 0.0):
        n = int(round(t_f / dt))
        t = np.arange(n + 1) * dt
        return cls(t=t, theta=np.full(n + 1, theta), lambda1=np.full(n + 1, lambda1))

    def step_controls(self, n_steps: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Zero-order-hold values for steps ``k = 0..n_steps-1``."""
        if n_steps == 0:
            return np.zeros(0), np.zeros(0)
        if self.t.size == 0:
            raise ValueError("empty schedule")
        if self.t.size > 1 and np.max(np.diff(self.t)) > dt * (1 + 1e-9):
            raise ValueError("schedule must be sampled at least every dt")
        tk = np.arange(n_steps) * dt
        idx = np.clip(np.searchsorted(self.t, tk + 1e-12 * dt, side="right") - 1, 0, self.t.size - 1)
        return self.theta[idx], self.lambda1[idx]

    def to_csv(self, path, comments: dict | None = None) -> Path:
        r = self.r if self.r is not None else np.full(self.t.shape, np.nan)
        return write_csv(path, ("t", "theta", "lambda1", "r"),
                         zip(self.t, self.theta, self.lambda1, r), comments)

    def to_dict(self) -> dict:
        out = {"t": self.t.tolist(), "theta": self.theta.tolist(), "lambda1": self.lambda1.tolist()}
        if self.r is not None:
            out["r"] = self.r.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ControlSchedule":
        return cls(t=d["t"], theta=d["theta"], lambda1=d["lambda1"], r=d.get("r"))


@dataclass
class MLPPath:
    """Per-sample record of a most-likely path in :data:`MLP_COLUMNS` layout."""

    columns: np.ndarray
    final_ket: np.ndarray | None = None
    final_state: np.ndarray | None = None
    final_bundle: np.ndarray | None = None
    J: float = float("nan")
    fidelity: float | None = None
    shadow_drift: float | None = None

    def col(self, name: str) -> np.ndarray:
        return self.columns[:, MLP_COLUMNS.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self.col("t")

    def schedule(self) -> ControlSchedule:
        return ControlSchedule(t=self.col("t"), theta=self.col("theta"),
                               lambda1=self.col("lambda1"), r=self.col("r"))

    def to_csv(self, path, comments: dict | None = None) -> Path:
        return write_csv(path, MLP_COLUMNS, self.columns, comments)


@dataclass
class TrajectoryRecord:
    """One stochastic run in :data:`TRAJ_COLUMNS` layout plus the final state."""

    columns: np.ndarray
    final_state: np.ndarray | None = None
    final_fidelity: float | None = None
    seed: int = 0
    stream_id: int = 0
    extra: dict = field(default_factory=dict)

    def col(self, name: str) -> np.ndarray:
        return self.columns[:, TRAJ_COLUMNS.index(name)]

    def to_csv(self, path, comments: dict | None = None) -> Path:
        return write_csv(path, TRAJ_COLUMNS, self.columns, comments)
