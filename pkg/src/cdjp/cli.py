"""``cdjp`` command-line front end.

Every artifact embeds the config hash and seed. Validation problems exit
with status 2, other library errors with status 1, each with a one-line
diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import ScalarBundle
from .config import ExperimentConfig, load_config
from .control import (
    anneal_optimal, anneal_sample_control, control_from_document, load_solution, save_solution,
    solution_from_document,
)
from .errors import CDJPError, ConfigError
from .gauss import OVERLAY_COLUMNS, steady_state_covariances, theta0_benchmark
from .mlp import mlp_integrate_ket
from .paths import ControlSchedule, write_csv
from .stats import BatchSpec, compare, resolve_threads, run_batch


def _stamp(cfg: ExperimentConfig, seed: int, **extra) -> dict:
    return {"config_hash": cfg.hash(), "seed": seed, "preset": cfg.name, "cdjp_version": __version__, **extra}


def _write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return path


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg) -> int:
    return cfg.seed if args.seed is None else args.seed


def _load(args) -> ExperimentConfig:
    overrides = {}
    if getattr(args, "n_traj", None) is not None:
        overrides["n_traj"] = args.n_traj
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, args.preset, overrides)


def cmd_mlp(args, cfg: ExperimentConfig) -> list[Path]:
    """Most-likely path from a stored solution's bundle, or from the ``σ = 𝟙`` bundle."""
    problem = cfg.problem()
    if args.solution:
        doc = load_solution(args.solution)
        control = control_from_document(doc)
        if not isinstance(control, ScalarBundle):
            sol = solution_from_document(doc, problem)
            path = sol.path
        else:
            path = None
        bundle0 = control if isinstance(control, ScalarBundle) else None
    else:
        bundle0, path = problem.identity_bundle(), None
    if path is None:
        path, _ = mlp_integrate_ket(problem.psi0, bundle0, cfg.tau, cfg.t_f, cfg.dt, cfg.lambda1_max,
                                    theta_fixed=cfg.theta_fixed, target=problem.psi_target)
    out = _out_dir(args, cfg)
    stamp = _stamp(cfg, _seed(args, cfg), fidelity=path.fidelity, J=path.J)
    return [path.to_csv(out / "mlp_path.csv", stamp), path.schedule().to_csv(out / "control.csv", stamp)]


def _solve(args, cfg, kind: str) -> list[Path]:
    seed = _seed(args, cfg)
    workers = resolve_threads(args.threads)
    out = _out_dir(args, cfg)
    if kind == "optimal":
        problem = cfg.problem()
        sol = anneal_optimal(problem, cfg.anneal_config("anneal", seed, workers))
    else:
        problem = cfg.problem("sample_gate")
        sol = anneal_sample_control(problem, cfg.anneal_config("sample_anneal", seed, workers), n_c=cfg.n_c)
    stamp = _stamp(cfg, seed)
    files = [save_solution(sol, problem, out / f"{kind}_solution.json", stamp)]
    files.append(sol.path.to_csv(out / f"{kind}_mlp_path.csv", stamp))
    files.append(sol.schedule.to_csv(out / f"{kind}_control.csv", stamp))
    status = "converged" if sol.converged else "NoConvergence"
    print(f"{kind}: fidelity={sol.fidelity:.6f} J={sol.J:.6f} {status}")
    return files


def cmd_optimize(args, cfg):
    return _solve(args, cfg, "optimal")


def cmd_sample_control(args, cfg):
    return _solve(args, cfg, "sample")


def cmd_trajectories(args, cfg: ExperimentConfig) -> list[Path]:
    """Batch statistics under a stored solution's schedule; never re-solves."""
    if not args.solution:
        raise ConfigError("trajectories needs --solution")
    doc = load_solution(args.solution)
    problem = cfg.problem("sample_gate" if doc["kind"] == "sample" else "fidelity_gate")
    if doc.get("problem_hash") not in (None, problem.hash()):
        raise ConfigError("solution was produced for a different problem")
    schedule = ControlSchedule.from_dict(doc["schedule"])
    seed = _seed(args, cfg)
    spec = BatchSpec(schedule, problem.rho0, problem.rho_target, cfg.n_traj, seed, cfg.tau, cfg.t_f, cfg.dt)
    res = run_batch(spec, args.threads)
    out = _out_dir(args, cfg)
    kind = doc["kind"]
    stamp = _stamp(cfg, seed, solution=str(args.solution), n_traj=cfg.n_traj)
    files = [res.histogram.to_csv(out / f"{kind}_histogram.csv", stamp)]
    files.append(write_csv(out / f"{kind}_fidelities.csv", ("trajectory", "fidelity"),
                           enumerate(res.fidelities), stamp))
    files.append(_write_json(out / f"{kind}_report.json",
                             {**stamp, "kind": kind, **res.histogram.to_dict()}))
    fr = res.histogram.fractions_above
    print(f"{kind}: " + " ".join(f"F>{t:.2f}: {100 * v:.2f}%" for t, v in fr.items())
          + f" failures={res.histogram.n_failures}")
    return files


def cmd_gauss_bench(args, cfg: ExperimentConfig) -> list[Path]:
    bench = theta0_benchmark(cfg.tau, cfg.t_f, cfg.dt, tuple(cfg.gauss_final_means), cfg.n_levels)
    q3, q4, q5 = steady_state_covariances(cfg.tau)
    out = _out_dir(args, cfg)
    stamp = _stamp(cfg, _seed(args, cfg), max_mean_deviation=bench.max_mean_deviation,
                   alpha1=bench.constants.alpha1, alpha2=bench.constants.alpha2)
    files = [write_csv(out / "steady_state.csv", ("tau", "q3", "q4", "q5"), [(cfg.tau, q3, q4, q5)], stamp)]
    files.append(write_csv(out / "gauss_overlay.csv", OVERLAY_COLUMNS, bench.overlay_rows(), stamp))
    print(f"max mean deviation {bench.max_mean_deviation:.3e}, fidelity {bench.fidelity:.8f}")
    return files


def cmd_compare(args, cfg: ExperimentConfig | None) -> list[Path]:
    if not (args.optimal and args.sample):
        raise ConfigError("compare needs --optimal and --sample report files")
    fo = json.loads(Path(args.optimal).read_text(encoding="utf-8"))
    fs = json.loads(Path(args.sample).read_text(encoding="utf-8"))
    thresholds = sorted(set(fo["fractions_above"]) & set(fs["fractions_above"]))
    if not thresholds:
        raise ConfigError("reports share no thresholds")
    rep = compare({float(t): fo["fractions_above"][t] for t in thresholds},
                  {float(t): fs["fractions_above"][t] for t in thresholds}, [float(t) for t in thresholds])
    out = Path(args.out or Path(args.optimal).parent)
    stamp = {"optimal_report": str(args.optimal), "sample_report": str(args.sample),
             "config_hash": fo.get("config_hash"), "seed": fo.get("seed")}
    text = rep.to_text()
    print(text)
    (out / "comparison.txt").write_text(text + "\n", encoding="utf-8")
    return [rep.to_csv(out / "comparison.csv", stamp), out / "comparison.txt"]


COMMANDS = {
    "mlp": cmd_mlp, "optimize": cmd_optimize, "sample-control": cmd_sample_control,
    "trajectories": cmd_trajectories, "gauss-bench": cmd_gauss_bench, "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdjp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--preset")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=Path)
        s.add_argument("--threads", type=int)
        s.add_argument("--n-traj", type=int, dest="n_traj")
        s.add_argument("--solution", type=Path)
        if name == "compare":
            s.add_argument("--optimal", type=Path)
            s.add_argument("--sample", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = None if args.command == "compare" else _load(args)
        files = COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"cdjp {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except CDJPError as exc:
        print(f"cdjp {args.command}: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"cdjp {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
