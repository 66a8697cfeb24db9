"""Command line: ``kcharge gen | solve | bench | verify``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

from kcharge.bench import ALGORITHMS, ExperimentConfig, SolverSettings, run_solver, run_sweep, summarize
from kcharge.coverage import requirement_table, verify_k_coverage
from kcharge.graphs import build_reachability, build_time_expanded
from kcharge.instance import GenerationParams, NetworkInstance, generate_instance, load_instance, save_instance
from kcharge.kinematics import evaluate_path
from kcharge.solution import load_solution_order, save_solution
from kcharge.solvers.baselines import AcsParams
from kcharge.solvers.dp import BudgetExceededError
from kcharge.solvers.exact import OracleBudget
from kcharge.solvers.rl import RlHyperparams, rollout, train


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _ints(text):
    return tuple(int(x) for x in text.split(","))


def add_generation_flags(p):
    p.add_argument("--area", type=float, default=500.0, help="side of the square field (m)")
    p.add_argument("--sensing-range", type=float, default=135.0)
    p.add_argument("--beta-range", type=_floats, default=(0.2, 1.0), help="consumption rate bounds, W")
    p.add_argument("--max-attempts", type=int, default=200, help="coverage resampling bound")


def add_model_flags(p):
    # None keeps the instance file's value (or the generator default)
    p.add_argument("--time-step", type=float, default=None, help="time-bucket width, s (default 1)")
    p.add_argument("--include-return", type=_bool, default=None, help="close tours at the depot (default true)")
    p.add_argument("--grid-spacing", type=float, default=None, help="coverage grid spacing, m (default 5)")


def add_solver_flags(p):
    g = p.add_argument_group("solver settings")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--label-cap", type=int, default=5_000_000)
    g.add_argument("--dp-time-limit", type=float, default=None)
    g.add_argument("--no-progress-filter", action="store_true", help="DP: allow non-decrementing extensions")
    g.add_argument("--episodes", type=int, default=500)
    g.add_argument("--gamma", type=float, default=0.9)
    g.add_argument("--learning-rate", type=float, default=1e-3)
    g.add_argument("--batch-size", type=int, default=32)
    g.add_argument("--replay-capacity", type=int, default=10_000)
    g.add_argument("--eps-start", type=float, default=1.0)
    g.add_argument("--eps-end", type=float, default=0.05)
    g.add_argument("--eps-decay-fraction", type=float, default=0.8)
    g.add_argument("--hidden", type=_ints, default=(64, 64))
    g.add_argument("--no-keep-best", action="store_true", help="DQN: report the greedy rollout only")
    g.add_argument("--agents", type=int, default=20)
    g.add_argument("--iterations", type=int, default=200)
    g.add_argument("--global-decay", type=float, default=0.1)
    g.add_argument("--local-decay", type=float, default=0.1)
    g.add_argument("--acs-beta", type=float, default=2.0)
    g.add_argument("--q0", type=float, default=0.9)
    g.add_argument("--restarts", type=int, default=100)
    g.add_argument("--oracle-max-requesters", type=int, default=10)
    g.add_argument("--oracle-time-limit", type=float, default=300.0)


def _model_overrides(a) -> dict:
    names = {"time_step": a.time_step, "include_return": a.include_return, "grid_spacing": a.grid_spacing}
    return {k: v for k, v in names.items() if v is not None}


def generation_params(a, n=None, k=None, alpha=None) -> GenerationParams:
    gen = GenerationParams(
        n=n if n is not None else a.n, k=k if k is not None else a.k,
        alpha=alpha if alpha is not None else a.alpha,
        area_width=a.area, area_height=a.area, sensing_range=a.sensing_range, beta_range=tuple(a.beta_range),
        max_attempts=a.max_attempts,
    )
    return replace(gen, **_model_overrides(a))


def solver_settings(a) -> SolverSettings:
    return SolverSettings(
        dp_label_cap=a.label_cap, dp_time_limit=a.dp_time_limit, dp_require_progress=not a.no_progress_filter,
        dqn=RlHyperparams(gamma=a.gamma, eps_start=a.eps_start, eps_end=a.eps_end,
                          eps_decay_fraction=a.eps_decay_fraction, episodes=a.episodes, batch_size=a.batch_size,
                          learning_rate=a.learning_rate, replay_capacity=a.replay_capacity, hidden=a.hidden,
                          keep_best=not a.no_keep_best, seed=a.seed),
        acs=AcsParams(agents=a.agents, iterations=a.iterations, global_decay=a.global_decay,
                      local_decay=a.local_decay, beta=a.acs_beta, q0=a.q0, seed=a.seed),
        random_restarts=a.restarts,
        oracle=OracleBudget(max_requesters=a.oracle_max_requesters, time_limit=a.oracle_time_limit),
    )


def with_model_flags(inst: NetworkInstance, a) -> NetworkInstance:
    overrides = _model_overrides(a)
    if not overrides:
        return inst
    return NetworkInstance(replace(inst.params, **overrides), inst.sensors, inst.requests, inst.seed)


def cmd_gen(a) -> int:
    inst = generate_instance(generation_params(a), a.seed)
    if a.out:
        save_instance(inst, a.out)
    else:
        from kcharge.instance import dumps_instance
        sys.stdout.write(dumps_instance(inst))
    print(f"{inst.n} sensors, {len(inst.requests)} requests", file=sys.stderr)
    return 0


def _load_or_generate(a) -> NetworkInstance:
    if a.instance:
        return with_model_flags(load_instance(a.instance), a)
    return generate_instance(generation_params(a), a.seed)


def cmd_solve(a) -> int:
    inst = _load_or_generate(a)
    if a.dump_graph:
        with open(a.dump_graph, "w") as fh:
            if a.algorithm == "dp":
                build_time_expanded(inst).dump(fh)
            else:
                build_reachability(inst).dump(fh)
    settings = solver_settings(a)
    if a.algorithm == "dqn" and a.policy_out:
        table = requirement_table(inst)
        policy = train(inst, settings.dqn, table)
        policy.net.save(a.policy_out)
        sol = rollout(policy, inst, table)
    else:
        try:
            sol = run_solver(a.algorithm, inst, a.seed, settings)
        except BudgetExceededError as exc:
            print(f"budget exceeded: {exc}", file=sys.stderr)
            return 3
    if sol is None:
        print("no feasible tour found", file=sys.stderr)
        return 2
    if a.trace_out and "trace" in sol.stats:
        with open(a.trace_out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "best_length_m"])
            w.writerows([(i, repr(float(v))) for i, v in sol.stats["trace"]])
    if a.out:
        save_solution(sol, a.out)
    else:
        print(json.dumps(sol.to_dict(), indent=2))
    if "labels" in sol.stats:
        print(f"labels: {sol.stats['labels']}", file=sys.stderr)
    return 0


def cmd_bench(a) -> int:
    cfg = ExperimentConfig(
        algorithms=tuple(a.algorithms.split(",")) if a.algorithms else (),
        ks=a.k, ns=a.n, alphas=a.alpha, seeds=tuple(range(a.seed, a.seed + a.seeds)),
        generation=generation_params(a, n=a.n[0], k=a.k[0], alpha=a.alpha[0]),
        solvers=solver_settings(a), output=a.out, timing=not a.no_timing,
    )
    records = run_sweep(cfg, jobs=a.jobs)
    for row in summarize(records):
        energy = row["median_energy_kj"]
        print(f"{row['algorithm']:>7} k={row['k']} n={row['n']} alpha={row['alpha']}: "
              f"{row['feasible']}/{row['runs']} feasible, median "
              f"{'--' if energy is None else f'{energy:.1f} kJ'}, {row['budget_exceeded']} over budget")
    return 1 if any(r.status == "solver-bug" for r in records) else 0


def cmd_verify(a) -> int:
    inst = with_model_flags(load_instance(a.instance), a)
    order = load_solution_order(a.solution)
    ev = evaluate_path(order, inst)
    covered = verify_k_coverage(inst, order)
    print(json.dumps({"feasible": ev.feasible, "k_covered": covered, "distance_m": ev.travel_distance,
                      "energy_kj": ev.travel_energy / 1000.0, "violated_at": ev.violated_at}, indent=2))
    return 0 if ev.feasible and covered else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kcharge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--alpha", type=float, default=0.45)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    add_generation_flags(p)
    add_model_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one instance; prints the solution JSON")
    p.add_argument("--algorithm", choices=ALGORITHMS, required=True)
    p.add_argument("--instance", help="instance file (otherwise generated from --n/--k/--alpha/--seed)")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--alpha", type=float, default=0.45)
    p.add_argument("--out")
    p.add_argument("--trace-out", help="ACS: write the (iteration, best length) trace as CSV")
    p.add_argument("--policy-out", help="DQN: write the trained parameters as text")
    p.add_argument("--dump-graph", help="write the solver's graph as 'src dst weight_m' lines")
    add_generation_flags(p)
    add_model_flags(p)
    add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a parameter sweep and write CSV")
    p.add_argument("--algorithms", default=",".join(ALGORITHMS[:5]))
    p.add_argument("--k", type=_ints, default=(2,))
    p.add_argument("--n", type=_ints, default=(64,))
    p.add_argument("--alpha", type=_floats, default=(0.45,))
    p.add_argument("--seeds", type=int, default=20, help="number of seeds per cell, starting at --seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="leave compute_time_s blank (byte-stable output)")
    p.add_argument("--out", required=True)
    add_generation_flags(p)
    add_model_flags(p)
    add_solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="re-check a solution file against an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", required=True)
    add_model_flags(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
