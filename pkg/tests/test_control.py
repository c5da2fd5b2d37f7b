import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdjp.bundle import ScalarBundle
from cdjp.control import (
    AnnealConfig, FourierControl, ShootingProblem, _better, anneal_optimal, anneal_sample_control,
    evaluate_control, load_solution, replay_schedule, save_solution, simulated_annealing, solution_from_document,
)
from cdjp.errors import ConfigError, DimensionMismatch
from cdjp.fock import build_operators, make_state
from cdjp.paths import ControlSchedule
from cdjp.sme import StepParams, stratonovich_step

SMALL = AnnealConfig(initial_temperature=0.05, steps_per_temperature=10, max_levels=4, restarts=2, seed=3)


def toy_evaluate(x):
    # smooth fidelity peak at (0.5, -0.3) and a cost that prefers small |x|
    x = np.asarray(x)
    return float(np.exp(-np.sum((x - [0.5, -0.3]) ** 2))), float(np.sum(x**2))


@pytest.fixture(scope="module")
def short_problem():
    rho0 = make_state("cat", 20, alpha=0.25 - 0.75j)
    tgt = make_state("fock_superposition", 20, coefficients=[1.0])
    return ShootingProblem(rho0, tgt, tau=15.0, t_f=0.3, dt=1e-3, lambda1_max=0.2, fidelity_gate=0.9,
                           name="short")


def test_better_rule():
    assert _better((0.95, 2.0), (0.9, 0.1), 0.92)  # gate passing beats failing
    assert _better((0.93, 0.5), (0.99, 0.6), 0.92)  # among passing, lower J wins
    assert _better((0.91, 9.0), (0.90, 0.1), 0.92)  # among failing, higher F wins
    assert not _better((0.93, 0.5), (0.93, 0.5), 0.92)


def test_anneal_config_validation():
    with pytest.raises(ConfigError):
        AnnealConfig(cooling_rate=1.0)
    with pytest.raises(ConfigError):
        AnnealConfig(restarts=0)
    assert AnnealConfig(initial_temperature=1.0, cooling_rate=0.5, min_temperature=0.1).n_levels_effective == 4


def test_annealing_is_deterministic():
    cfg = AnnealConfig(initial_temperature=0.05, steps_per_temperature=20, max_levels=10, restarts=3, seed=11)
    a = simulated_annealing(toy_evaluate, [0.0, 0.0], [1.0, 1.0], cfg, 0.99)
    b = simulated_annealing(toy_evaluate, [0.0, 0.0], [1.0, 1.0], cfg, 0.99)
    assert np.array_equal(a.x, b.x) and a.fidelity == b.fidelity and a.J == b.J


def test_annealing_independent_of_worker_count():
    cfg = AnnealConfig(initial_temperature=0.05, steps_per_temperature=20, max_levels=10, restarts=4, seed=5)
    serial = simulated_annealing(toy_evaluate, [0.0, 0.0], [1.0, 1.0], cfg, 0.99)
    pooled = simulated_annealing(toy_evaluate, [0.0, 0.0], [1.0, 1.0],
                                 AnnealConfig(**{**cfg.__dict__, "workers": 3}), 0.99)
    assert np.array_equal(serial.x, pooled.x) and serial.J == pooled.J


def test_annealing_traces_are_monotone():
    cfg = AnnealConfig(initial_temperature=0.05, steps_per_temperature=40, max_levels=30, restarts=2, seed=1)
    res = simulated_annealing(toy_evaluate, [0.0, 0.0], [1.0, 1.0], cfg, 0.95)
    assert res.converged and res.fidelity >= 0.95
    for tr in res.traces:
        assert np.all(np.diff(tr.phase1_best) >= 0)
        assert np.all(np.diff(tr.phase2_accepted_J) < 0)
        assert tr.reached_gate_at is not None
    # the Pareto phase pulls J below the value where the gate was first met
    assert res.J < np.sum(np.array([0.5, -0.3]) ** 2)


def test_unreachable_gate_keeps_best_fidelity():
    cfg = AnnealConfig(initial_temperature=0.05, steps_per_temperature=20, max_levels=10, restarts=2, seed=2)
    res = simulated_annealing(lambda x: (0.5 * toy_evaluate(x)[0], 0.0), [0.0, 0.0], [1.0, 1.0], cfg, 0.9)
    assert not res.converged
    assert res.fidelity == max(t.phase1_best[-1] for t in res.traces)


def test_problem_validation_and_hash(short_problem):
    with pytest.raises(DimensionMismatch):
        ShootingProblem(np.eye(3) / 3, np.eye(4) / 4)
    with pytest.raises(ConfigError):
        ShootingProblem(short_problem.rho0, short_problem.rho_target, fidelity_gate=1.5)
    same = ShootingProblem(short_problem.rho0, short_problem.rho_target, tau=15.0, t_f=0.3, dt=1e-3,
                           fidelity_gate=0.9, name="short")
    other = ShootingProblem(short_problem.rho0, short_problem.rho_target, tau=14.0, t_f=0.3, dt=1e-3,
                            fidelity_gate=0.9, name="short")
    assert same.hash() == short_problem.hash() != other.hash()
    assert short_problem.n_steps == 300 and short_problem.n_levels == 20


def test_identity_bundle_has_no_costate_content(short_problem):
    b = short_problem.identity_bundle()
    assert b.k10 == b.k01 == b.k20 == b.k11 == b.k02 == 0.0


def test_theta_shift_by_pi_with_negated_readout_is_identical():
    # L_{θ+π} = -L_θ, so the step with (θ+π, -r) is the step with (θ, r)
    ops = build_operators(20)
    rho = make_state("cat", 20, alpha=0.4 + 0.3j)
    a = stratonovich_step(rho, 0.37, StepParams(theta=0.3, lambda1=0.1), ops)
    b = stratonovich_step(rho, -0.37, StepParams(theta=0.3 + np.pi, lambda1=0.1), ops)
    assert np.max(np.abs(a - b)) < 1e-13


def test_replayed_schedule_invariant_under_theta_shift(short_problem):
    sol = evaluate_control(ScalarBundle(0.1, -0.2, 0.3, 0.1, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0), short_problem)
    sched = sol["path"].schedule()
    ops = build_operators(20)
    shifted = ControlSchedule(sched.t, sched.theta + np.pi, sched.lambda1, -sched.r)
    a = replay_schedule(sched, short_problem, ops)
    b = replay_schedule(shifted, short_problem, ops)
    assert np.max(np.abs(a - b)) < 1e-12


def test_replay_tracks_the_path(short_problem):
    ev = evaluate_control(ScalarBundle(0.1, -0.2, 0.3, 0.1, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0), short_problem)
    rep = evaluate_control(ev["path"].schedule(), short_problem)
    # zero-order hold of sample-time controls is first order in dt
    assert rep["fidelity"] == pytest.approx(ev["fidelity"], abs=5e-3)


@given(st.integers(1, 6), st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_fourier_vector_round_trip_and_bounds(n_c, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=3.0, size=4 * (n_c + 1) + 4)
    ctl = FourierControl.from_vector(x, n_c, 0.2)
    assert np.array_equal(ctl.to_vector(), x)
    t = np.linspace(0, 3, 101)
    assert np.all(np.abs(ctl.theta(t)) <= np.pi / 2) and np.all(np.abs(ctl.lambda1(t)) <= 0.2)
    assert np.array_equal(FourierControl.from_dict(json.loads(json.dumps(ctl.to_dict()))).to_vector(), x)


def test_fourier_vector_length_checked():
    with pytest.raises(ValueError):
        FourierControl.from_vector(np.zeros(5), 2, 0.2)


def test_fourier_without_drive_has_zero_lambda():
    ctl = FourierControl.from_vector(np.ones(4 * 3 + 4), 2, 0.0)
    assert np.all(ctl.lambda1(np.linspace(0, 3, 7)) == 0)


def test_fourier_fidelity_responds_smoothly_to_coefficients(short_problem):
    x = np.zeros(4 * 3 + 4)
    x[0], x[6] = 0.4, 0.1
    base = evaluate_control(FourierControl.from_vector(x, 2, 0.2, 0.0, 0.3), short_problem)["fidelity"]
    diffs = []
    for h in (1e-2, 1e-3):
        xp = x.copy()
        xp[0] += h
        diffs.append(evaluate_control(FourierControl.from_vector(xp, 2, 0.2, 0.0, 0.3),
                                      short_problem)["fidelity"] - base)
    assert diffs[0] != 0.0
    assert diffs[1] == pytest.approx(diffs[0] / 10, rel=0.05)


def test_optimal_solve_round_trip(short_problem, tmp_path):
    sol = anneal_optimal(short_problem, SMALL)
    assert set(np.unique(sol.schedule.lambda1)) <= {-0.2, 0.2}
    doc_path = save_solution(sol, short_problem, tmp_path / "opt.json")
    d = load_solution(doc_path)
    assert d["status"] in ("converged", "NoConvergence") and d["problem_hash"] == short_problem.hash()
    again = solution_from_document(d, short_problem)
    assert again.fidelity == sol.fidelity and again.J == sol.J
    assert anneal_optimal(short_problem, SMALL).fidelity == sol.fidelity


def test_stalled_solve_reports_no_convergence(short_problem, tmp_path):
    strict = ShootingProblem(short_problem.rho0, short_problem.rho_target, tau=15.0, t_f=0.3, dt=1e-3,
                             fidelity_gate=0.999999)
    sol = anneal_sample_control(strict, SMALL, n_c=2)
    d = load_solution(save_solution(sol, strict, tmp_path / "s.json"))
    assert d["status"] == "NoConvergence" and math.isfinite(d["fidelity"]) and "schedule" in d
    assert solution_from_document(d, strict).fidelity == pytest.approx(sol.fidelity, abs=1e-14)


def test_load_solution_rejects_other_documents(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"kind": "histogram"}')
    with pytest.raises(ConfigError):
        load_solution(p)


def test_sample_control_only_maximizes_fidelity(short_problem):
    sol = anneal_sample_control(short_problem, SMALL, n_c=2)
    assert all(r["phase2_accepts"] == 0 and r["reached_gate_at"] is None for r in sol.provenance["restarts"])
    assert sol.converged == (sol.fidelity >= short_problem.fidelity_gate)


def test_restarts_start_at_spread_distances():
    starts = []

    def record(x):
        starts.append(np.array(x))
        return 0.0, 0.0

    cfg = AnnealConfig(steps_per_temperature=1, max_levels=1, restarts=5, restart_spread=1.0, seed=4)
    simulated_annealing(record, np.zeros(400), np.ones(400), cfg, 0.5)
    firsts = starts[::2]  # each restart evaluates its start then one proposal
    assert np.array_equal(firsts[0], np.zeros(400))
    widths = [np.std(x) for x in firsts[1:]]
    assert widths == pytest.approx([0.5, 1.0, 2.0, 4.0], rel=0.15)
