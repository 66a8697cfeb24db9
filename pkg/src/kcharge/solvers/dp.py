"""Exact dynamic program over the time-expanded DAG.

Every sensor is its own color, so a label is a ``(vertex, color set)`` pair;
the requirement table of a label is a function of its color set alone, and
only the shortest distance (with one predecessor) is kept per pair.
Vertices are processed in bucket-time order, which is topological because
each edge moves strictly forward in time.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass
from typing import Optional

from kcharge.coverage import RequirementTable
from kcharge.graphs import CycleError, TimeExpandedGraph
from kcharge.instance import NetworkInstance
from kcharge.solution import Solution, make_solution, validated


class BudgetExceededError(RuntimeError):
    """Label store or wall-clock budget exhausted."""


class BrokenChainError(RuntimeError):
    pass


@dataclass(frozen=True)
class DpLabel:
    at_vertex: tuple
    color_set: frozenset
    table: RequirementTable
    distance: float              # depot to at_vertex, return leg excluded
    predecessor: Optional["DpLabel"] = None


class ColorCodingDP:
    def __init__(self, g: TimeExpandedGraph, table: RequirementTable, *, require_progress: bool = True,
                 label_cap: int = 5_000_000, time_limit: Optional[float] = None,
                 prune_with_incumbent: bool = True):
        self.g = g
        self.net = g.net
        self.table0 = table
        self.sig = table.sig
        self.require_progress = require_progress
        self.label_cap = label_cap
        self.time_limit = time_limit
        self.prune = prune_with_incumbent
        self.regions = {r: self.sig.regions_of(self.net.ids[r]) for r in g.rows}
        self._tables = {0: table.t}
        self.store: dict = {}   # vertex -> {mask: (distance, pred_vertex, pred_mask)}
        self.label_count = 0
        self.best = None        # (total_length, vertex, mask)

    def table_of(self, mask: int) -> tuple:
        t = self._tables.get(mask)
        if t is None:
            low = mask & -mask
            row = low.bit_length() - 1
            vals = list(self.table_of(mask ^ low))
            for i in self.regions[row]:
                if vals[i] > 0:
                    vals[i] -= 1
            t = tuple(vals)
            self._tables[mask] = t
        return t

    def _key(self, v):
        row, k = v
        return (self.g.bucket_time(row, k), -1 if row == self.net.depot else row, k)

    def run(self) -> Optional[tuple]:
        g, net = self.g, self.net
        depot = net.depot
        ret = net.dist if net.include_return else None
        deadline = None if self.time_limit is None else time.monotonic() + self.time_limit
        start = g.start
        self.store = {start: {0: (0.0, None, None)}}
        self.label_count = 1
        if not any(self.table0.t):
            self.best = (0.0, start, 0)
            return self.best
        heap = [(self._key(start), start)]
        queued = {start}
        done = set()
        ops = 0
        while heap:
            key_v, v = heapq.heappop(heap)
            done.add(v)
            labels = self.store[v]
            succ = g.successors(v)
            for mask, (dist, _, _) in list(labels.items()):
                t = self.table_of(mask)
                if not any(t):
                    continue
                for w, weight in succ:
                    rw = w[0]
                    bit = 1 << rw
                    if mask & bit:
                        continue
                    if self.require_progress and not any(t[i] > 0 for i in self.regions[rw]):
                        continue
                    nd = dist + weight
                    if self.prune and self.best is not None:
                        bound = nd + ret[rw][depot] if ret is not None else nd
                        if bound >= self.best[0]:
                            continue
                    nmask = mask | bit
                    wl = self.store.get(w)
                    if w in done:
                        raise CycleError(f"edge {v} -> {w} points at an already processed vertex")
                    if wl is None:
                        wl = self.store[w] = {}
                    old = wl.get(nmask)
                    if old is not None and old[0] <= nd:
                        continue
                    if old is None:
                        self.label_count += 1
                        if self.label_count > self.label_cap:
                            raise BudgetExceededError(f"label cap {self.label_cap} exceeded")
                    wl[nmask] = (nd, v, mask)
                    if w not in queued:
                        heapq.heappush(heap, (self._key(w), w))
                        queued.add(w)
                    if not any(self.table_of(nmask)):
                        total = nd + ret[rw][depot] if ret is not None else nd
                        if self.best is None or total < self.best[0]:
                            self.best = (total, w, nmask)
                    ops += 1
                    if deadline is not None and ops % 2048 == 0 and time.monotonic() > deadline:
                        raise BudgetExceededError(f"time limit {self.time_limit}s exceeded")
        return self.best

    def label(self, vertex, mask: int) -> DpLabel:
        """Materialise the stored label and its predecessor chain."""
        chain = []
        v, m = vertex, mask
        while v is not None:
            try:
                dist, pv, pm = self.store[v][m]
            except KeyError:
                raise BrokenChainError(f"no stored label at {v} with mask {m:#x}") from None
            chain.append((v, m, dist))
            v, m = pv, pm
        pred = None
        for v, m, dist in reversed(chain):
            colors = frozenset(self.net.ids[r] for r in range(self.net.n) if m >> r & 1)
            pred = DpLabel(v, colors, RequirementTable(self.table_of(m), self.sig), dist, pred)
        return pred

    def labels(self):
        for v, labels in self.store.items():
            for m in labels:
                yield v, m


def recover_path(final_label: DpLabel, g: TimeExpandedGraph) -> list[int]:
    """Walk predecessors back to the start vertex, one color per step."""
    order = []
    lab = final_label
    while lab.predecessor is not None:
        prev = lab.predecessor
        sid = g.sensor_of(lab.at_vertex)
        if sid is None or prev.color_set != lab.color_set - {sid} or sid not in lab.color_set:
            raise BrokenChainError(f"label at {lab.at_vertex} does not extend its predecessor by one color")
        if all(w != lab.at_vertex for w, _ in g.successors(prev.at_vertex)):
            raise BrokenChainError(f"no edge {prev.at_vertex} -> {lab.at_vertex}")
        order.append(sid)
        lab = prev
    if lab.at_vertex != g.start or lab.color_set:
        raise BrokenChainError("predecessor chain does not end at the start vertex")
    order.reverse()
    return order


def solve_dp(g: TimeExpandedGraph, table: RequirementTable, inst: Optional[NetworkInstance] = None,
             **options) -> Optional[Solution]:
    """Minimum-length tour whose color set zeroes ``table``; None if none exists.

    Options: ``require_progress`` (extend only with sensors that decrement
    some entry), ``label_cap``, ``time_limit`` (seconds) and
    ``prune_with_incumbent``. Raises :class:`BudgetExceededError`.
    """
    inst = inst or g.inst
    dp = ColorCodingDP(g, table, **options)
    best = dp.run()
    if best is None:
        return None
    total, v, mask = best
    final = dp.label(v, mask)
    order = recover_path(final, g)
    sol = make_solution(order, inst, "dp", labels=dp.label_count, final_label=final)
    return validated(sol, inst, table.sig.grid_spacing)
