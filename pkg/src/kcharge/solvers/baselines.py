"""Comparison heuristics: nearest-first greedy, random multi-restart, and a
deadline-aware Ant Colony System.

All three build tours forward from the depot on the reachability graph. A
move to sensor j is allowed when j is unvisited, the static edge exists, the
actual arrival time meets j's deadline, and charging j decrements at least
one requirement-table entry. Construction stops when the table is all zero
(success) or no move is allowed (stuck).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from kcharge.coverage import RequirementTable
from kcharge.graphs import ReachabilityGraph, build_reachability
from kcharge.instance import NetworkInstance
from kcharge.kinematics import network
from kcharge.solution import Solution, make_solution, validated


class TourBuilder:
    def __init__(self, inst: NetworkInstance, table: RequirementTable, reach: Optional[ReachabilityGraph] = None):
        self.inst = inst
        self.net = net = network(inst)
        self.reach = reach or build_reachability(inst)
        self.table0 = np.array(table.t, dtype=np.int64)
        self.sig = table.sig
        cover = np.zeros((net.n + 1, len(self.table0)), dtype=np.int64)
        for r in self.reach.rows:
            idx = list(self.sig.regions_of(net.ids[r]))
            cover[r, idx] = 1
        self.cover = cover
        self.requester = np.zeros(net.n + 1, dtype=bool)
        self.requester[self.reach.rows] = True

    def start(self):
        """Fresh construction state: (row, time, visited mask, table)."""
        visited = np.zeros(self.net.n + 1, dtype=bool)
        return self.net.depot, self.net.t0, visited, self.table0.copy()

    def moves(self, row: int, t: float, visited: np.ndarray, table: np.ndarray):
        """Allowed next rows and their arrival times."""
        net = self.net
        useful = (self.cover @ (table > 0)) > 0
        arrival = net.arrivals_from(row, t)
        ok = self.reach.adj[row] & self.requester & ~visited & useful & (arrival <= net.deadline_np)
        rows = np.flatnonzero(ok)
        return rows, arrival[rows]

    def step(self, table: np.ndarray, row: int) -> np.ndarray:
        return np.maximum(table - self.cover[row], 0)

    def finish(self, rows: list, algorithm: str, **stats) -> Solution:
        order = [self.net.ids[r] for r in rows]
        return validated(make_solution(order, self.inst, algorithm, **stats), self.inst, self.sig.grid_spacing)


def _walk(builder: TourBuilder, choose) -> Optional[list]:
    row, t, visited, table = builder.start()
    rows = []
    while table.any():
        cand, arr = builder.moves(row, t, visited, table)
        if len(cand) == 0:
            return None
        pick = choose(row, cand)
        j = int(cand[pick])
        rows.append(j)
        visited[j] = True
        t = float(arr[pick])
        table = builder.step(table, j)
        row = j
    return rows


def solve_greedy(inst: NetworkInstance, table: RequirementTable,
                 reach: Optional[ReachabilityGraph] = None) -> Optional[Solution]:
    """Always move to the nearest allowed sensor; None when stuck."""
    b = TourBuilder(inst, table, reach)
    dist = b.net.dist_np
    rows = _walk(b, lambda row, cand: int(np.argmin(dist[row, cand])))
    return None if rows is None else b.finish(rows, "greedy")


def solve_random(inst: NetworkInstance, table: RequirementTable, seed: int = 0, restarts: int = 100,
                 reach: Optional[ReachabilityGraph] = None) -> Optional[Solution]:
    """Uniformly random allowed moves; shortest completed tour over ``restarts`` walks."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    b = TourBuilder(inst, table, reach)
    rng = np.random.default_rng(seed)
    best, best_len, found = None, np.inf, 0
    for _ in range(restarts):
        rows = _walk(b, lambda row, cand: int(rng.integers(len(cand))))
        if rows is None:
            continue
        found += 1
        length = b.net.tour_length(rows)
        if length < best_len:
            best, best_len = rows, length
    return None if best is None else b.finish(best, "random", completed=found, restarts=restarts)


# -- ant colony system -------------------------------------------------------

@dataclass(frozen=True)
class AcsParams:
    agents: int = 20
    iterations: int = 200
    global_decay: float = 0.1   # theta
    local_decay: float = 0.1
    beta: float = 2.0
    q0: float = 0.9
    tau0: Optional[float] = None  # None -> 1 / (n * mean edge length)
    seed: int = 0

    def __post_init__(self):
        if self.agents < 1 or self.iterations < 1:
            raise ValueError("agent and iteration counts must be positive")
        for name in ("global_decay", "local_decay"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0 <= self.q0 <= 1:
            raise ValueError("q0 must lie in [0, 1]")


def global_update(tau: np.ndarray, tour_edges, length: Optional[float], theta: float) -> np.ndarray:
    """tau <- (1 - theta) tau + theta * delta, delta = 1/length on the tour's edges, else 0."""
    out = (1.0 - theta) * tau
    if length is not None:
        for i, j in tour_edges:
            out[i, j] += theta / length
    return out


def local_update(tau: np.ndarray, i: int, j: int, rho: float, tau0: float) -> None:
    tau[i, j] = (1.0 - rho) * tau[i, j] + rho * tau0


def tour_edges(net, rows) -> list:
    path = [net.depot] + list(rows)
    edges = list(zip(path[:-1], path[1:]))
    if net.include_return and rows:
        edges.append((rows[-1], net.depot))
    return edges


def initial_pheromone(reach: ReachabilityGraph) -> float:
    lengths = [w for _, _, w in reach.edges()]
    n = max(len(reach.rows), 1)
    mean = float(np.mean(lengths)) if lengths else 0.0
    return 1.0 / (n * mean) if mean > 0 else 1.0


def solve_acs(inst: NetworkInstance, table: RequirementTable, p: AcsParams = AcsParams(),
              reach: Optional[ReachabilityGraph] = None) -> Optional[Solution]:
    """Best closed tour over all agents and iterations; None if no agent ever completes.

    ``stats['trace']`` lists ``(iteration, best-so-far length)``; the final
    pheromone matrix is ``stats['pheromone']``.
    """
    b = TourBuilder(inst, table, reach)
    net = b.net
    if not b.table0.any():
        return b.finish([], "acs", trace=[], pheromone=None)
    rng = np.random.default_rng(p.seed)
    tau0 = p.tau0 if p.tau0 is not None else initial_pheromone(b.reach)
    tau = np.where(b.reach.adj, tau0, 0.0)
    eta = np.where(net.dist_np > 0, 1.0 / np.maximum(net.dist_np, 1e-12), 1e12) ** p.beta

    best, best_len = None, np.inf
    trace = []
    for it in range(p.iterations):
        it_best, it_len = None, np.inf
        for _ in range(p.agents):
            row, t, visited, tbl = b.start()
            rows = []
            while tbl.any():
                cand, arr = b.moves(row, t, visited, tbl)
                if len(cand) == 0:
                    rows = None
                    break
                score = tau[row, cand] * eta[row, cand]
                if rng.random() < p.q0:
                    pick = int(np.argmax(score))
                else:
                    total = score.sum()
                    pick = int(rng.choice(len(cand), p=score / total)) if total > 0 else int(rng.integers(len(cand)))
                j = int(cand[pick])
                local_update(tau, row, j, p.local_decay, tau0)
                rows.append(j)
                visited[j] = True
                t = float(arr[pick])
                tbl = b.step(tbl, j)
                row = j
            if rows is None:
                continue
            if net.include_return and rows:
                local_update(tau, row, net.depot, p.local_decay, tau0)
            length = net.tour_length(rows)
            if length < it_len:
                it_best, it_len = rows, length
        if it_best is not None:
            tau = global_update(tau, tour_edges(net, it_best), it_len, p.global_decay)
            if it_len < best_len:
                best, best_len = it_best, it_len
        else:
            tau = global_update(tau, (), None, p.global_decay)
        tau = np.where(b.reach.adj, np.maximum(tau, np.finfo(float).tiny), 0.0)
        trace.append((it, best_len))
    if best is None:
        return None
    return b.finish(best, "acs", trace=trace, pheromone=tau)
