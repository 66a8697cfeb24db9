"""Charging-time recurrence, path evaluation and best-position insertion.

Times are absolute seconds from the charger's departure. ``INFEASIBLE``
(``math.inf``) marks a missed deadline; it is a value, not an error.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from kcharge.instance import NetworkInstance, SensorNode, SimParams

INFEASIBLE = math.inf


class PathError(ValueError):
    pass


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def residual_energy(node: SensorNode, t: float, t0: float = 0.0) -> float:
    return max(0.0, node.residual - node.consumption_rate * (t - t0))


def advance(t_i: float, node_i: Optional[SensorNode], node_j: SensorNode, params: SimParams,
            position_i=None) -> float:
    """Time charging begins at ``node_j`` after fully charging ``node_i`` from ``t_i``.

    ``node_i=None`` means the charger leaves the depot (or ``position_i``) with
    nothing to charge there.
    """
    if t_i == INFEASIBLE:
        return INFEASIBLE
    t0 = params.departure_time
    if node_i is None:
        origin = position_i if position_i is not None else params.depot
        depart = t_i
    else:
        origin = node_i.position
        depart = t_i + (params.battery_capacity - residual_energy(node_i, t_i, t0)) / params.transfer_rate
    t_j = depart + distance(origin, node_j.position) / params.charger_speed
    deadline = t0 + node_j.deadline
    if deadline <= t0 or t_j > deadline:
        return INFEASIBLE
    return t_j


class Network:
    """Index-based view of an instance shared by the solvers.

    Row ``i < n`` is ``inst.sensors[i]``; row ``n`` is the depot.
    """

    def __init__(self, inst: NetworkInstance):
        p = inst.params
        self.inst = inst
        self.params = p
        self.ids = [s.id for s in inst.sensors]
        self.row = {sid: i for i, sid in enumerate(self.ids)}
        self.n = len(self.ids)
        self.depot = self.n
        pos = [s.position for s in inst.sensors] + [p.depot]
        self.dist = [[distance(a, b) for b in pos] for a in pos]
        self.dist_np = np.array(self.dist)
        self.residual = [s.residual for s in inst.sensors]
        self.beta = [s.consumption_rate for s in inst.sensors]
        self.deadline = [p.departure_time + s.deadline for s in inst.sensors] + [math.inf]
        self.residual_np = np.array(self.residual + [p.battery_capacity])
        self.beta_np = np.array(self.beta + [0.0])
        self.deadline_np = np.array(self.deadline)
        self.B = p.battery_capacity
        self.rc = p.transfer_rate
        self.s = p.charger_speed
        self.t0 = p.departure_time
        self.include_return = p.include_return

    def departure(self, i: int, t: float) -> float:
        if i == self.depot:
            return t
        res = max(0.0, self.residual[i] - self.beta[i] * (t - self.t0))
        return t + (self.B - res) / self.rc

    def arrive(self, i: int, t: float, j: int) -> float:
        if t == INFEASIBLE:
            return INFEASIBLE
        t_j = self.departure(i, t) + self.dist[i][j] / self.s
        d = self.deadline[j]
        if d <= self.t0 or t_j > d:
            return INFEASIBLE
        return t_j

    def arrivals_from(self, i: int, t: float) -> np.ndarray:
        """Vectorised arrival time at every row from ``i`` (no deadline test)."""
        return self.departure(i, t) + self.dist_np[i] / self.s

    def charge_times(self, rows: Sequence[int], start: int = None, t: float = None):
        """Charge-start time per row; stops at the first violation.

        Returns ``(times, violated_index)`` where ``violated_index`` is None
        when every deadline holds.
        """
        prev = self.depot if start is None else start
        t = self.t0 if t is None else t
        times = []
        for idx, j in enumerate(rows):
            t = self.arrive(prev, t, j)
            if t == INFEASIBLE:
                return times, idx
            times.append(t)
            prev = j
        return times, None

    def tour_length(self, rows: Sequence[int]) -> float:
        """Depot -> rows -> (depot), summed left to right."""
        total = 0.0
        prev = self.depot
        for j in rows:
            total += self.dist[prev][j]
            prev = j
        if self.include_return and rows:
            total += self.dist[prev][self.depot]
        return total

    def rows_of(self, order: Sequence[int]) -> list[int]:
        seen = set()
        rows = []
        for sid in order:
            if sid in seen:
                raise PathError(f"sensor {sid} appears twice in the tour")
            seen.add(sid)
            try:
                rows.append(self.row[sid])
            except KeyError:
                raise PathError(f"unknown sensor id {sid}") from None
        return rows


@functools.lru_cache(maxsize=64)
def network(inst: NetworkInstance) -> Network:
    return Network(inst)


@dataclass(frozen=True)
class PathEvaluation:
    feasible: bool
    charge_times: tuple[float, ...]
    travel_distance: float
    travel_energy: float
    violated_at: Optional[int] = None


def evaluate_path(order: Sequence[int], inst: NetworkInstance) -> PathEvaluation:
    """Evaluate a tour given as the sensor ids visited after leaving the depot.

    ``charge_times`` holds one entry per visited sensor; entries after a
    violation are ``INFEASIBLE``.
    """
    net = network(inst)
    rows = net.rows_of(order)
    times, bad = net.charge_times(rows)
    length = net.tour_length(rows)
    if bad is not None:
        times = times + [INFEASIBLE] * (len(rows) - len(times))
    return PathEvaluation(
        feasible=bad is None,
        charge_times=tuple(times),
        travel_distance=length,
        travel_energy=length * inst.params.move_cost,
        violated_at=None if bad is None else order[bad],
    )


@dataclass(frozen=True)
class Insertion:
    position: int          # index in the sensor order; 0 = right after the depot
    delta_distance: float
    order: tuple[int, ...]
    charge_times: tuple[float, ...]


def insertion_deltas(net: Network, rows: Sequence[int], k: int) -> list[float]:
    """Added length for inserting row ``k`` before each slot of ``rows``.

    The last slot is the closing one (between the last sensor and the depot).
    """
    d = net.dist
    prevs = [net.depot] + list(rows)
    out = []
    for p, a in enumerate(prevs):
        if p < len(rows):
            b = rows[p]
            out.append(d[a][k] + d[k][b] - d[a][b])
        elif net.include_return:
            out.append(d[a][k] + d[k][net.depot] - d[a][net.depot])
        else:
            out.append(d[a][k])
    return out


def best_insertion_rows(net: Network, rows: Sequence[int], k: int, times: Sequence[float] = None):
    """Cheapest deadline-valid slot for row ``k``; ``None`` when no slot validates.

    Returns ``(position, new_rows, new_times)``. Ties go to the earliest slot.
    ``times`` are the current charge times of ``rows`` (recomputed if omitted).
    """
    if times is None:
        times, bad = net.charge_times(rows)
        if bad is not None:
            raise PathError("current order is infeasible")
    deltas = insertion_deltas(net, rows, k)
    for p in sorted(range(len(deltas)), key=lambda q: (deltas[q], q)):
        start = net.depot if p == 0 else rows[p - 1]
        t = net.t0 if p == 0 else times[p - 1]
        tail = [k] + list(rows[p:])
        new_tail, bad = net.charge_times(tail, start, t)
        if bad is None:
            return p, list(rows[:p]) + tail, list(times[:p]) + new_tail
    return None


def best_insertion(order: Sequence[int], candidate_id: int, inst: NetworkInstance) -> Optional[Insertion]:
    net = network(inst)
    rows = net.rows_of(order)
    if candidate_id in order:
        raise PathError(f"sensor {candidate_id} is already in the tour")
    k = net.rows_of([candidate_id])[0]
    found = best_insertion_rows(net, rows, k)
    if found is None:
        return None
    p, new_rows, new_times = found
    delta = net.tour_length(new_rows) - net.tour_length(rows)
    return Insertion(p, delta, tuple(net.ids[r] for r in new_rows), tuple(new_times))
