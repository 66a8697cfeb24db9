"""Experiment runner: seeded sweeps over (k, n, alpha), one record per solver run."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from kcharge.coverage import UnderCoveredError, requirement_table
from kcharge.graphs import build_reachability, build_time_expanded
from kcharge.instance import GenerationParams, InstanceError, NetworkInstance, generate_instance
from kcharge.solution import Solution, SolverBugError
from kcharge.solvers.baselines import AcsParams, solve_acs, solve_greedy, solve_random
from kcharge.solvers.dp import BudgetExceededError, solve_dp
from kcharge.solvers.exact import OracleBudget, solve_exact
from kcharge.solvers.rl import RlHyperparams, solve_dqn

log = logging.getLogger(__name__)

ALGORITHMS = ("dp", "dqn", "acs", "random", "greedy", "exact")
CSV_COLUMNS = ("algorithm", "k", "n", "alpha", "seed", "feasible", "travel_distance_m", "travel_energy_kj",
               "compute_time_s", "nodes_charged", "status")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    dp_label_cap: int = 5_000_000
    dp_time_limit: Optional[float] = None
    dp_require_progress: bool = True
    dqn: RlHyperparams = RlHyperparams()
    acs: AcsParams = AcsParams()
    random_restarts: int = 100
    oracle: OracleBudget = OracleBudget()


@dataclass(frozen=True)
class ExperimentConfig:
    algorithms: tuple = ALGORITHMS[:5]
    ks: tuple = (2,)
    ns: tuple = (64,)
    alphas: tuple = (0.45,)
    seeds: tuple = tuple(range(20))
    generation: GenerationParams = GenerationParams(n=64)
    solvers: SolverSettings = SolverSettings()
    output: Optional[str] = None
    timing: bool = True

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigError("algorithm list is empty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithm(s): {sorted(unknown)}")
        for name in ("ks", "ns", "alphas", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"sweep '{name}' is empty")

    def cells(self):
        for k, n, alpha, seed, algo in itertools.product(self.ks, self.ns, self.alphas, self.seeds,
                                                         self.algorithms):
            yield (algo, k, n, alpha, seed)


@dataclass(frozen=True)
class ResultRecord:
    algorithm: str
    k: int
    n: int
    alpha: float
    seed: int
    feasible: bool
    travel_distance: Optional[float]
    travel_energy: Optional[float]   # kJ
    compute_time: float
    nodes_charged: int
    status: str   # ok | none-found | budget-exceeded | solver-bug | instance-error

    def row(self, timing: bool = True) -> list:
        def num(x):
            return "" if x is None else repr(float(x))
        return [self.algorithm, self.k, self.n, repr(float(self.alpha)), self.seed, str(self.feasible).lower(),
                num(self.travel_distance), num(self.travel_energy),
                f"{self.compute_time:.6f}" if timing else "", self.nodes_charged, self.status]


def cell_instance(cfg: ExperimentConfig, k: int, n: int, alpha: float, seed: int) -> NetworkInstance:
    return generate_instance(replace(cfg.generation, n=n, k=k, alpha=alpha), seed)


def run_solver(algo: str, inst: NetworkInstance, seed: int, settings: SolverSettings) -> Optional[Solution]:
    table = requirement_table(inst)
    if algo == "dp":
        g = build_time_expanded(inst)
        return solve_dp(g, table, inst, label_cap=settings.dp_label_cap, time_limit=settings.dp_time_limit,
                        require_progress=settings.dp_require_progress)
    if algo == "dqn":
        return solve_dqn(inst, table, replace(settings.dqn, seed=seed))
    if algo == "acs":
        return solve_acs(inst, table, replace(settings.acs, seed=seed), build_reachability(inst))
    if algo == "random":
        return solve_random(inst, table, seed=seed, restarts=settings.random_restarts)
    if algo == "greedy":
        return solve_greedy(inst, table)
    if algo == "exact":
        return solve_exact(inst, table, settings.oracle)
    raise ConfigError(f"unknown algorithm {algo!r}")


def run_cell(cell, cfg: ExperimentConfig) -> ResultRecord:
    algo, k, n, alpha, seed = cell
    base = dict(algorithm=algo, k=k, n=n, alpha=alpha, seed=seed)
    try:
        inst = cell_instance(cfg, k, n, alpha, seed)
    except (InstanceError, UnderCoveredError) as exc:
        log.warning("cell %s: %s", cell, exc)
        return ResultRecord(**base, feasible=False, travel_distance=None, travel_energy=None, compute_time=0.0,
                            nodes_charged=0, status="instance-error")
    start = time.monotonic()
    status = "ok"
    sol = None
    try:
        sol = run_solver(algo, inst, seed, cfg.solvers)
        if sol is None:
            status = "none-found"
    except BudgetExceededError:
        status = "budget-exceeded"
    except SolverBugError as exc:
        log.error("cell %s: %s", cell, exc)
        status = "solver-bug"
    elapsed = time.monotonic() - start
    if sol is None:
        return ResultRecord(**base, feasible=False, travel_distance=None, travel_energy=None,
                            compute_time=elapsed, nodes_charged=0, status=status)
    return ResultRecord(**base, feasible=True, travel_distance=sol.distance,
                        travel_energy=sol.distance * inst.params.move_cost / 1000.0,
                        compute_time=elapsed, nodes_charged=len(sol.order), status=status)


def _run_one(args):
    return run_cell(*args)


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRecord]:
    cells = list(cfg.cells())
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            records = list(pool.map(_run_one, [(c, cfg) for c in cells]))
    else:
        records = [run_cell(c, cfg) for c in cells]
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    records.sort(key=lambda r: (r.k, r.n, r.alpha, r.seed, order[r.algorithm]))
    if cfg.output:
        write_results(records, cfg.output, cfg.timing)
    return records


def records_csv(records: Sequence[ResultRecord], timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row(timing))
    return buf.getvalue()


def summarize(records: Sequence[ResultRecord]) -> list[dict]:
    """Per (algorithm, k, n, alpha): run count, feasible count, medians over feasible runs."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.algorithm, r.k, r.n, r.alpha), []).append(r)
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    out = []
    for key in sorted(groups, key=lambda g: (g[1], g[2], g[3], order[g[0]])):
        rs = groups[key]
        ok = [r for r in rs if r.feasible]
        out.append({
            "algorithm": key[0], "k": key[1], "n": key[2], "alpha": key[3],
            "runs": len(rs), "feasible": len(ok),
            "budget_exceeded": sum(r.status == "budget-exceeded" for r in rs),
            "median_energy_kj": statistics.median(r.travel_energy for r in ok) if ok else None,
            "median_time_s": statistics.median(r.compute_time for r in rs),
        })
    return out


def summary_csv(records: Sequence[ResultRecord], timing: bool = True) -> str:
    rows = summarize(records)
    cols = ["algorithm", "k", "n", "alpha", "runs", "feasible", "budget_exceeded", "median_energy_kj",
            "median_time_s"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        vals = []
        for c in cols:
            v = row[c]
            if c == "median_time_s" and not timing:
                v = ""
            elif isinstance(v, float):
                v = repr(v)
            elif v is None:
                v = ""
            vals.append(v)
        w.writerow(vals)
    return buf.getvalue()


def write_results(records: Sequence[ResultRecord], path, timing: bool = True) -> None:
    path = Path(path)
    path.write_text(records_csv(records, timing))
    path.with_name(path.stem + "_summary.csv").write_text(summary_csv(records, timing))
