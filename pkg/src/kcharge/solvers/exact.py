"""Brute-force reference solver for small instances.

Enumerates every inclusion-minimal set of requesters that zeroes the
requirement table, then every visiting order of each set with a
straight-line-return bound. Dropping a sensor from a feasible tour never
lengthens it or delays later arrivals, so minimal sets suffice.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from kcharge.coverage import CoverageSignatureMap, RequirementTable
from kcharge.graphs import snap_to_grid
from kcharge.instance import NetworkInstance
from kcharge.kinematics import INFEASIBLE, network
from kcharge.solution import Solution, make_solution, validated
from kcharge.solvers.dp import BudgetExceededError


@dataclass(frozen=True)
class OracleBudget:
    max_requesters: int = 10
    max_subsets: int = 1 << 12
    max_permutations: int = 2_000_000
    time_limit: float = 300.0


def enumerate_charge_sets(table: RequirementTable, requests, sig: Optional[CoverageSignatureMap] = None,
                          budget: OracleBudget = OracleBudget()) -> list[frozenset]:
    """All inclusion-minimal requester sets whose charging zeroes ``table``."""
    sig = sig or table.sig
    ids = sorted({r.sensor_id if hasattr(r, "sensor_id") else int(r) for r in requests})
    need = np.array(table.t, dtype=np.int64)
    if not need.any():
        return [frozenset()]
    # sensors touching no positive entry can never be in a minimal set
    useful = [s for s in ids if any(need[i] > 0 for i in sig.regions_of(s))]
    if len(useful) > budget.max_requesters or (1 << len(useful)) > budget.max_subsets:
        raise BudgetExceededError(f"{len(useful)} candidate requesters exceed the oracle budget")
    cover = np.zeros((len(useful), len(need)), dtype=np.int64)
    for a, s in enumerate(useful):
        cover[a, list(sig.regions_of(s))] = 1
    masks = np.arange(1 << len(useful))
    member = (masks[:, None] >> np.arange(len(useful))[None, :]) & 1
    zeroes = ((member @ cover) >= need[None, :]).all(axis=1)
    out = []
    for m in np.flatnonzero(zeroes).tolist():
        if all(not zeroes[m ^ (1 << b)] for b in range(len(useful)) if m >> b & 1):
            out.append(frozenset(useful[b] for b in range(len(useful)) if m >> b & 1))
    out.sort(key=lambda s: (len(s), sorted(s)))
    return out


def solve_exact(inst: NetworkInstance, table: RequirementTable, budget: OracleBudget = OracleBudget(),
                time_grid: bool = False) -> Optional[Solution]:
    """Shortest feasible tour over all minimal charge sets, or None.

    With ``time_grid`` every arrival is rounded up to its time-bucket end,
    reproducing the time-expanded graph's arithmetic.
    """
    net = network(inst)
    if len(inst.requests) > budget.max_requesters:
        raise BudgetExceededError(f"{len(inst.requests)} requesters exceed the oracle budget")
    sets = enumerate_charge_sets(table, inst.requests, table.sig, budget)
    step = inst.params.time_step
    stop_at = time.monotonic() + budget.time_limit
    depot = net.depot
    dist = net.dist
    best = [INFEASIBLE, None]
    counter = itertools.count()

    def arrive(prev, t, j):
        a = net.arrive(prev, t, j)
        if time_grid and a != INFEASIBLE:
            a = snap_to_grid(a, net.deadline[j], net.t0, step)
        return a

    def closing(j):
        return dist[j][depot] if net.include_return else 0.0

    def search(prev, t, length, path, remaining):
        if next(counter) > budget.max_permutations:
            raise BudgetExceededError("oracle permutation budget exhausted")
        if not remaining:
            total = length + closing(prev) if path else 0.0
            if total < best[0]:
                best[0], best[1] = total, list(path)
            return
        if time.monotonic() > stop_at:
            raise BudgetExceededError("oracle time limit exceeded")
        for j in sorted(remaining):
            nl = length + dist[prev][j]
            if nl + closing(j) >= best[0]:
                continue
            a = arrive(prev, t, j)
            if a == INFEASIBLE:
                continue
            path.append(j)
            search(j, a, nl, path, remaining - {j})
            path.pop()

    for s in sets:
        search(depot, net.t0, 0.0, [], frozenset(net.row[sid] for sid in s))
    if best[1] is None:
        return None
    order = [net.ids[r] for r in best[1]]
    sol = make_solution(order, inst, "exact", time_grid=time_grid)
    return validated(sol, inst, table.sig.grid_spacing)
