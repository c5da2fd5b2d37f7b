"""Monte-Carlo batches of measured trajectories and fidelity statistics.

Trajectory ``i`` of a batch draws its Wiener increments from
``NoiseStream(base_seed, i)``, so every final fidelity depends only on
``(schedule, base_seed, i)`` and never on how work is split across threads.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError
from .mlp import pure_ket
from .paths import ControlSchedule, write_csv
from .sme import NoiseStream, StepParams, n_steps_for

N_BINS = 50
THRESHOLDS = (0.90, 0.95)
CHUNK = 64


@dataclass
class BatchSpec:
    control: ControlSchedule
    rho0: np.ndarray
    rho_target: np.ndarray
    n_traj: int
    base_seed: int = 0
    tau: float = 15.0
    t_f: float = 3.0
    dt: float = 1e-3

    def __post_init__(self):
        if self.n_traj < 1:
            raise ConfigError("n_traj must be at least 1")
        StepParams(dt=self.dt, tau=self.tau)
        n_steps_for(self.t_f, self.dt)


@dataclass
class FidelityHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    fractions_above: dict
    n_failures: int = 0

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path, comments: dict | None = None) -> Path:
        rows = zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts)
        return write_csv(path, ("bin_lo", "bin_hi", "count"), rows, comments)

    def to_dict(self) -> dict:
        return {"bin_edges": self.bin_edges.tolist(), "counts": self.counts.tolist(),
                "fractions_above": {f"{k:.2f}": v for k, v in self.fractions_above.items()},
                "n_failures": self.n_failures}


@dataclass
class BatchResult:
    histogram: FidelityHistogram
    fidelities: np.ndarray  # index i is trajectory i; NaN marks a failed run
    spec_summary: dict = field(default_factory=dict)


def histogram(fidelities, thresholds=THRESHOLDS, n_bins: int = N_BINS) -> FidelityHistogram:
    """50 uniform bins on [0, 1]; non-finite entries count as failures, not samples."""
    f = np.asarray(fidelities, dtype=float)
    ok = np.isfinite(f)
    good = np.clip(f[ok], 0.0, 1.0)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts, _ = np.histogram(good, bins=edges)
    n = max(good.size, 1)
    fr = {float(t): float(np.count_nonzero(good > t) / n) for t in sorted(thresholds)}
    return FidelityHistogram(edges, counts.astype(np.int64), fr, int(np.count_nonzero(~ok)))


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("CDJP_THREADS", "1"))
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return threads


def _noise_block(base_seed: int, start: int, stop: int, n_steps: int, dt: float) -> np.ndarray:
    return np.stack([NoiseStream(base_seed, i).increments(n_steps, dt) for i in range(start, stop)])


def run_batch(spec: BatchSpec, threads: int | None = None) -> BatchResult:
    """Simulate ``spec.n_traj`` Itô trajectories under the held schedule."""
    n_steps = n_steps_for(spec.t_f, spec.dt)
    theta, lam = spec.control.step_controls(n_steps, spec.dt)
    psi0 = pure_ket(spec.rho0)
    tgt = pure_ket(spec.rho_target)
    theta = np.ascontiguousarray(theta, dtype=float)
    lam = np.ascontiguousarray(lam, dtype=float)

    def chunk(bounds):
        a, b = bounds
        dw = _noise_block(spec.base_seed, a, b, n_steps, spec.dt)
        return a, kernels.ito_batch_fidelities(psi0, tgt, theta, lam, spec.tau, spec.dt, dw)

    jobs = [(a, min(a + CHUNK, spec.n_traj)) for a in range(0, spec.n_traj, CHUNK)]
    threads = resolve_threads(threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk, jobs))
    else:
        parts = [chunk(j) for j in jobs]
    fid = np.empty(spec.n_traj)
    for a, f in sorted(parts, key=lambda p: p[0]):
        fid[a:a + f.size] = f
    summary = {"n_traj": spec.n_traj, "base_seed": spec.base_seed, "tau": spec.tau, "t_f": spec.t_f,
               "dt": spec.dt}
    return BatchResult(histogram(fid), fid, summary)


def threshold_tolerance(p: float, n: int) -> float:
    """Three-sigma binomial band for a fraction ``p`` estimated from ``n`` runs."""
    return 3.0 * math.sqrt(max(p * (1 - p), 0.0) / n)


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonReport:
    thresholds: tuple
    optimal: dict
    sample: dict
    relative_increase: dict  # percent; inf when the sample fraction is 0

    def rows(self):
        for t in self.thresholds:
            yield t, self.optimal[t], self.sample[t], self.relative_increase[t]

    def to_text(self) -> str:
        lines = ["threshold  optimal  sample  increase"]
        for t, o, s, inc in self.rows():
            lines.append(f"{t:9.2f}  {100 * o:6.2f}%  {100 * s:6.2f}%  {inc:+8.1f}%")
        return "\n".join(lines)

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("threshold", "optimal_fraction", "sample_fraction", "relative_increase_percent"))
        for row in self.rows():
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def to_csv(self, path, comments: dict | None = None) -> Path:
        rows = [tuple(float(x) for x in r) for r in self.rows()]
        return write_csv(path, ("threshold", "optimal_fraction", "sample_fraction", "relative_increase_percent"),
                         rows, comments)

    def dominates(self) -> bool:
        return all(self.optimal[t] > self.sample[t] for t in self.thresholds)


def relative_increase(optimal: float, sample: float) -> float:
    if sample == 0:
        return 0.0 if optimal == 0 else math.inf
    return 100.0 * (optimal - sample) / sample


def compare(optimal: FidelityHistogram | dict, sample: FidelityHistogram | dict,
            thresholds=THRESHOLDS) -> ComparisonReport:
    """Relative increase of the fraction above each threshold, in percent.

    Accepts histograms or plain ``{threshold: fraction}`` maps; fractions are
    already normalized by their own batch size.
    """
    fo = optimal.fractions_above if isinstance(optimal, FidelityHistogram) else optimal
    fs = sample.fractions_above if isinstance(sample, FidelityHistogram) else sample
    th = tuple(float(t) for t in thresholds)
    o = {t: float(fo[t]) for t in th}
    s = {t: float(fs[t]) for t in th}
    return ComparisonReport(th, o, s, {t: relative_increase(o[t], s[t]) for t in th})
