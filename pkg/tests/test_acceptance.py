"""Acceptance gate: one PASS/FAIL line per criterion.

Criteria 5-8 read the solutions stored under ``results/<preset>/`` by
``scripts/reproduce.sh`` and re-evaluate them deterministically. Set
``CDJP_RESOLVE=1`` to re-run the solves here instead (hours on one core).
"""

import math
import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from cdjp.bundle import bundle_from_states, bundle_rhs_array, commutator_via_mccoy, rk4
from cdjp.config import load_config
from cdjp.control import (
    anneal_optimal, anneal_sample_control, load_solution, save_solution, solution_from_document,
)
from cdjp.costate import anticomm, costate_rhs_general, rk4_costate_step, stochastic_hamiltonian
from cdjp.fock import build_operators, hamiltonian, hermiticity_residual, quadratures
from cdjp.gauss import theta0_benchmark
from cdjp.paths import ControlSchedule
from cdjp.qubit import bloch_hamiltonian, density_from_bloch, from_bloch
from cdjp.sme import NoiseStream, StepParams, stratonovich_step
from cdjp.stats import BatchSpec, compare, resolve_threads, run_batch
from cdjp.uvwz import UVWZ, analytic_uvwz, integrate_uvwz

from conftest import random_pair

PRESETS = ("binomial", "cat-cooling", "cat-to-cat")
FIDELITY_FLOOR = {"binomial": 0.93, "cat-cooling": 0.95, "cat-to-cat": 0.93}
RESULTS = Path(os.environ.get("CDJP_RESULTS", Path(__file__).resolve().parents[1] / "results"))
N_TRAJ = 2000


def report(capsys, number, name, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number:2d} {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def _solve(preset, kind):
    cfg = load_config(preset=preset)
    workers = resolve_threads()
    if kind == "optimal":
        problem = cfg.problem()
        sol = anneal_optimal(problem, cfg.anneal_config("anneal", workers=workers))
    else:
        problem = cfg.problem("sample_gate")
        sol = anneal_sample_control(problem, cfg.anneal_config("sample_anneal", workers=workers), n_c=cfg.n_c)
    stamp = {"config_hash": cfg.hash(), "seed": cfg.seed, "preset": preset}
    save_solution(sol, problem, RESULTS / preset / f"{kind}_solution.json", stamp)


@pytest.fixture(scope="module")
def solutions():
    """``{preset: {kind: (problem, document, solution)}}``, re-evaluated from disk."""
    out = {}
    for preset in PRESETS:
        cfg = load_config(preset=preset)
        out[preset] = {}
        for kind, gate in (("optimal", "fidelity_gate"), ("sample", "sample_gate")):
            path = RESULTS / preset / f"{kind}_solution.json"
            if os.environ.get("CDJP_RESOLVE") == "1" or not path.exists():
                if os.environ.get("CDJP_RESOLVE") != "1":
                    out[preset][kind] = None
                    continue
                _solve(preset, kind)
            problem = cfg.problem(gate)
            doc = load_solution(path)
            out[preset][kind] = (problem, doc, solution_from_document(doc, problem))
    return out


def _need(solutions, preset, kind):
    entry = solutions[preset][kind]
    if entry is None:
        pytest.fail(f"missing {RESULTS / preset / (kind + '_solution.json')}; run scripts/reproduce.sh")
    return entry


def test_01_integrator_soundness(capsys):
    ops = build_operators(36)
    worst_tr = worst_h = 0.0
    min_eig = math.inf
    slowest = 0.0
    for preset in PRESETS:
        rho = load_config(preset=preset).states()[0]
        p = StepParams(dt=1e-3, tau=15.0, theta=0.3, lambda1=0.2)
        L, _ = quadratures(ops, 0.3)
        dw = NoiseStream(0, 0).increments(3000, 1e-3)
        t0 = time.perf_counter()
        for k in range(3000):
            # a measured record: <L> plus white noise of strength √τ
            r = np.trace(L @ rho).real + math.sqrt(15.0) * dw[k] / 1e-3
            rho = stratonovich_step(rho, r, p, ops)
            worst_tr = max(worst_tr, abs(np.trace(rho).real - 1.0))
            worst_h = max(worst_h, hermiticity_residual(rho))
            min_eig = min(min_eig, np.linalg.eigvalsh(rho)[0])
        slowest = max(slowest, time.perf_counter() - t0)
    ok = worst_tr < 1e-9 and worst_h < 1e-12 and min_eig >= -1e-9 and slowest < 10.0
    report(capsys, 1, "integrator soundness", ok,
           f"trace {worst_tr:.1e}, hermiticity {worst_h:.1e}, min eig {min_eig:.1e}, slowest run {slowest:.1f} s")
    assert ok


def test_02_reduction_equivalence(capsys):
    rng = np.random.default_rng(2)
    ops = build_operators(12)
    th, lam, tau, dt = 0.3, 0.1, 15.0, 1e-3
    H = hamiltonian(ops, lam)
    L, _ = quadratures(ops, th)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(20):
        rho, sigma = random_pair(rng, 12, support=4)
        y = bundle_from_states(rho, sigma, ops).to_array()
        for k in range(500):
            rho, sigma = rk4_costate_step(rho, sigma, dt, H, L, tau)
            y = rk4(bundle_rhs_array, y, dt, th, lam, tau)
            if k % 25 == 24:
                r_trace = 0.5 * np.trace(anticomm(L, sigma) @ rho).real
                worst = max(worst, abs(r_trace - (np.cos(th) * y[0] + np.sin(th) * y[1])))
    secs = time.perf_counter() - t0
    ok = worst < 1e-6 and secs < 60
    report(capsys, 2, "reduction equivalence", ok, f"max readout gap {worst:.1e} over 20 pairs, {secs:.1f} s")
    assert ok


def test_03_mccoy_commutators(capsys):
    ops = build_operators(24)
    worst = 0.0
    for n in range(5):
        for m in range(5):
            brute = ops.xp_power(n, 0) @ ops.xp_power(0, m) - ops.xp_power(0, m) @ ops.xp_power(n, 0)
            block = 24 - n - m - 2
            diff = (brute - commutator_via_mccoy(ops, n, m))[:block, :block]
            worst = max(worst, float(np.max(np.abs(diff))) if diff.size else 0.0)
    ok = worst < 1e-10
    report(capsys, 3, "McCoy commutators", ok, f"max-norm gap {worst:.1e}")
    assert ok


def test_04_gaussian_benchmark(capsys):
    t0 = time.perf_counter()
    bench = theta0_benchmark(tau=15.0, t_f=3.0, dt=1e-3, q_f=(1.0, 0.5), n_levels=36)
    secs = time.perf_counter() - t0
    ok = bench.max_mean_deviation < 2e-2 and secs < 60
    report(capsys, 4, "Gaussian benchmark", ok, f"max mean deviation {bench.max_mean_deviation:.2e}, {secs:.1f} s")
    assert ok


def test_05_pontryagin_constancy(capsys, solutions):
    worst = 0.0
    for preset in PRESETS:
        _, _, sol = _need(solutions, preset, "optimal")
        K = sol.path.col("K")
        worst = max(worst, float((K.max() - K.min()) / np.max(np.abs(K))))
    ok = worst < 1e-3
    report(capsys, 5, "Pontryagin constancy", ok, f"max relative K variation {worst:.1e}")
    assert ok


def test_06_bang_bang(capsys, solutions):
    n_total = n_on = 0
    for preset in PRESETS:
        _, _, sol = _need(solutions, preset, "optimal")
        lam = sol.schedule.lambda1
        n_total += lam.size
        n_on += int(np.count_nonzero(np.isin(lam, (-0.2, 0.2))))
    ok = n_on == n_total
    report(capsys, 6, "bang-bang", ok, f"{n_on}/{n_total} samples at ±0.2")
    assert ok


def test_07_optimizer_targets(capsys, solutions):
    parts, ok = [], True
    for preset in PRESETS:
        _, doc, sol = _need(solutions, preset, "optimal")
        secs = doc["provenance"]["seconds"]
        hit = sol.fidelity >= FIDELITY_FLOOR[preset] and secs < 3600
        reproduced = abs(sol.fidelity - doc["fidelity"]) < 1e-9
        ok &= hit and reproduced
        parts.append(f"{preset} F={sol.fidelity:.4f} in {secs / 60:.0f} min")
    report(capsys, 7, "optimizer targets", ok, "; ".join(parts))
    assert ok


def test_08_trajectory_statistics(capsys, solutions):
    parts, ok = [], True
    for preset in PRESETS:
        t0 = time.perf_counter()
        hists = []
        for kind in ("optimal", "sample"):
            problem, _, sol = _need(solutions, preset, kind)
            sched = ControlSchedule.from_dict(sol.schedule.to_dict())
            spec = BatchSpec(sched, problem.rho0, problem.rho_target, N_TRAJ, base_seed=0)
            res = run_batch(spec)
            assert res.histogram.n_failures == 0
            hists.append(res.histogram)
        rep = compare(*hists)
        secs = time.perf_counter() - t0
        good = rep.dominates() and rep.relative_increase[0.95] > 25.0 and secs < 1800
        ok &= good
        parts.append(f"{preset} optimal {100 * rep.optimal[0.90]:.1f}/{100 * rep.optimal[0.95]:.1f}% vs sample "
                     f"{100 * rep.sample[0.90]:.1f}/{100 * rep.sample[0.95]:.1f}%, "
                     f"+{rep.relative_increase[0.95]:.0f}% at 0.95")
    report(capsys, 8, "trajectory statistics", ok, "; ".join(parts))
    assert ok


def test_09_qnd_constancy(capsys):
    rng = np.random.default_rng(9)
    ops = build_operators(12)
    L = ops.x
    H = 0.7 * ops.x2 + 0.3 * ops.x3 + 0.2 * ops.x
    worst = 0.0
    for _ in range(10):
        rho, sigma = random_pair(rng, 12, support=6)
        drho, dsig = costate_rhs_general(rho, sigma, H, L, 15.0)
        dr = 0.5 * np.trace(anticomm(L, sigma) @ drho).real + 0.5 * np.trace(anticomm(L, dsig) @ rho).real
        worst = max(worst, abs(dr))
    ok = worst < 1e-10
    report(capsys, 9, "QND constancy", ok, f"max |dr/dt| {worst:.1e}")
    assert ok


def test_10_qubit_equivalence(capsys):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        q = rng.normal(size=3)
        q *= rng.uniform(0, 1) / np.linalg.norm(q)
        lam0, lam = rng.normal(), rng.normal(size=3)
        h0, h = rng.normal(), rng.normal(size=3)
        l0, l = rng.normal(), rng.normal(size=3)
        r, tau = rng.normal(), rng.uniform(0.5, 20)
        op = stochastic_hamiltonian(density_from_bloch(q), from_bloch(lam0, lam), r, from_bloch(h0, h),
                                    from_bloch(l0, l), tau)
        worst = max(worst, abs(op - bloch_hamiltonian(lam, q, r, h, l0, l, tau)))
    ok = worst < 1e-12
    report(capsys, 10, "qubit equivalence", ok, f"max gap {worst:.1e} over 100 instances")
    assert ok


def _random_piecewise_theta(rng, dt):
    # two smooth pieces joined continuously at a grid point; θ(0) = 0
    kink = round(rng.uniform(0.5, 2.5) / dt) * dt
    a, w, c = rng.uniform(-1, 1), rng.uniform(0.5, 3), rng.uniform(-0.5, 0.5)
    b1, b2 = rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)

    def theta(s):
        s = np.asarray(s, dtype=float)
        left = a * np.sin(w * s) + c * s
        th_k = a * np.sin(w * kink) + c * kink
        return np.where(s < kink, left, th_k + b1 * (s - kink) + b2 * (s - kink) ** 2)

    def theta_dot(s):
        return a * w * np.cos(w * s) + c if s < kink else b1 + 2 * b2 * (s - kink)

    return kink, theta, theta_dot


def test_11_uvwz_closed_form(capsys):
    rng = np.random.default_rng(11)
    tau, dt = 15.0, 1e-3
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(50):
            alpha = complex(*rng.normal(size=2))
            A, B = rng.normal(size=2) * 2
            kink, theta, theta_dot = _random_piecewise_theta(rng, dt)
            t, ys = integrate_uvwz(UVWZ(alpha.real, alpha.imag, A, B), lambda s: 1.0 + theta_dot(s), tau, 3.0, dt)
            r, v = analytic_uvwz(alpha, A, B, lambda s: theta(s) + s, t[::100], tau, breakpoints=(kink,))
            worst = max(worst, float(np.max(np.abs(ys[::100, 0] - r))), float(np.max(np.abs(ys[::100, 1] - v))))
    ok = worst < 1e-8
    report(capsys, 11, "uvwz closed form", ok, f"max gap {worst:.1e} over 50 instances")
    assert ok
