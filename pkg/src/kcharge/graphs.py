"""Time-expanded DAG for the exact solver and the static reachability graph.

Time-expanded vertices are ``(row, k)`` pairs: sensor row ``row`` of
:class:`~kcharge.kinematics.Network` at bucket ``k`` whose time is
``min(t0 + k * step, D)``. The start vertex is ``(net.depot, 0)``. An arrival
at time ``a`` lands in the right-closed bucket ``(t^{k-1}, t^k]``, and the
charger leaves a vertex as if it had arrived at the bucket's upper end.
"""
from __future__ import annotations

import math
from collections import deque
from typing import Iterator, Optional

import numpy as np

from kcharge.instance import NetworkInstance
from kcharge.kinematics import Network, network


class CycleError(RuntimeError):
    pass


def bucket_index(arrival: float, t0: float, step: float) -> int:
    """Smallest k with t0 + k*step >= arrival."""
    k = math.ceil((arrival - t0) / step)
    if t0 + k * step < arrival:
        k += 1
    return max(k, 0)


def snap_to_grid(arrival: float, deadline: float, t0: float, step: float) -> float:
    """Upper end of the bucket holding ``arrival`` (the last bucket ends at the deadline)."""
    return min(t0 + bucket_index(arrival, t0, step) * step, deadline)


class TimeExpandedGraph:
    """Lazily expanded: out-edges are computed on first request and cached."""

    def __init__(self, inst: NetworkInstance, time_step: Optional[float] = None):
        self.inst = inst
        self.net: Network = network(inst)
        self.step = float(time_step or inst.params.time_step)
        if self.step <= 0:
            raise ValueError("time step must be positive")
        self.t0 = self.net.t0
        net = self.net
        self.rows = [net.row[sid] for sid in inst.requester_ids if net.deadline[net.row[sid]] > self.t0]
        self.last_bucket = {r: bucket_index(net.deadline[r], self.t0, self.step) for r in self.rows}
        self.start = (net.depot, 0)
        self._succ: dict = {}
        self._extra: dict = {}

    # -- vertices ----------------------------------------------------------
    def bucket_time(self, row: int, k: int) -> float:
        if row == self.net.depot:
            return self.t0
        return min(self.t0 + k * self.step, self.net.deadline[row])

    def vertex_time(self, v) -> float:
        return self.bucket_time(*v)

    def clique(self, sensor_id: int) -> list:
        r = self.net.row[sensor_id]
        if r not in self.last_bucket:
            return []
        return [(r, k) for k in range(self.last_bucket[r] + 1)]

    @property
    def vertex_count(self) -> int:
        return 1 + sum(b + 1 for b in self.last_bucket.values())

    def vertices(self) -> Iterator:
        yield self.start
        for r in self.rows:
            for k in range(self.last_bucket[r] + 1):
                yield (r, k)

    def sensor_of(self, v) -> Optional[int]:
        return None if v[0] == self.net.depot else self.net.ids[v[0]]

    # -- edges -------------------------------------------------------------
    def successors(self, v) -> list:
        """Out-edges of ``v`` as ``[(target_vertex, weight_m), ...]``."""
        out = self._succ.get(v)
        if out is None:
            out = self._compute_successors(v)
            self._succ[v] = out
        if v in self._extra:
            return out + self._extra[v]
        return out

    def _compute_successors(self, v) -> list:
        net = self.net
        row, k = v
        out = []
        if row == net.depot:
            for j in self.rows:
                a = self.t0 + net.dist[row][j] / net.s
                if a <= net.deadline[j]:
                    out.append(((j, bucket_index(a, self.t0, self.step)), net.dist[row][j]))
            return out
        dep = net.departure(row, self.bucket_time(row, k))
        for j in self.rows:
            if j == row:
                continue
            a = dep + net.dist[row][j] / net.s
            if a <= net.deadline[j]:
                kj = bucket_index(a, self.t0, self.step)
                if kj > 0:
                    out.append(((j, kj), net.dist[row][j]))
        return out

    def add_edge(self, u, v, weight: float = 0.0) -> None:
        """Inject an extra edge (used to exercise cycle detection)."""
        self._extra.setdefault(u, []).append((v, weight))

    def edge_arrays(self):
        """Materialise every edge as numpy arrays ``(src_row, src_k, dst_row, dst_k, weight)``."""
        net = self.net
        parts = []
        for (dst, w) in self._compute_successors(self.start):
            parts.append((np.array([net.depot]), np.array([0]), np.array([dst[0]]), np.array([dst[1]]),
                          np.array([w])))
        for i in self.rows:
            ks = np.arange(self.last_bucket[i] + 1)
            t = np.minimum(self.t0 + ks * self.step, net.deadline[i])
            res = np.maximum(0.0, net.residual[i] - net.beta[i] * (t - self.t0))
            dep = t + (net.B - res) / net.rc
            for j in self.rows:
                if j == i:
                    continue
                a = dep + net.dist[i][j] / net.s
                ok = a <= net.deadline[j]
                if not ok.any():
                    continue
                a = a[ok]
                kj = np.ceil((a - self.t0) / self.step).astype(np.int64)
                kj = np.where(self.t0 + kj * self.step < a, kj + 1, kj)
                keep = kj > 0
                n_e = int(keep.sum())
                parts.append((np.full(n_e, i), ks[ok][keep], np.full(n_e, j), kj[keep],
                              np.full(n_e, net.dist[i][j])))
        for u, extra in self._extra.items():
            for (v, w) in extra:
                parts.append((np.array([u[0]]), np.array([u[1]]), np.array([v[0]]), np.array([v[1]]),
                              np.array([w])))
        if not parts:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty, empty, np.zeros(0)
        return tuple(np.concatenate([p[c] for p in parts]) for c in range(5))

    @property
    def edge_count(self) -> int:
        return len(self.edge_arrays()[0])

    def dump(self, fh) -> None:
        """Write one ``src dst weight_m`` line per edge; vertices print as ``v0`` or ``<sensor>@<bucket>``."""
        def name(r, k):
            return "v0" if r == self.net.depot else f"{self.net.ids[r]}@{k}"

        sr, sk, dr, dk, w = self.edge_arrays()
        for a, b, c, d, e in zip(sr.tolist(), sk.tolist(), dr.tolist(), dk.tolist(), w.tolist()):
            fh.write(f"{name(a, b)} {name(c, d)} {e!r}\n")


def build_time_expanded(inst: NetworkInstance, time_step: Optional[float] = None) -> TimeExpandedGraph:
    return TimeExpandedGraph(inst, time_step)


def topological_order(g: TimeExpandedGraph) -> list:
    """Topological ordering of every vertex; raises :class:`CycleError` on a cycle.

    Sorting by bucket time is tried first and checked edge by edge; Kahn's
    algorithm is the fallback when some edge does not point forward in time.
    """
    depot = g.net.depot
    offsets = {depot: 0}
    rows_sorted = [depot] + list(g.rows)
    total = 1
    for r in g.rows:
        offsets[r] = total
        total += g.last_bucket[r] + 1
    vrow = np.empty(total, dtype=np.int64)
    vk = np.empty(total, dtype=np.int64)
    vtime = np.empty(total)
    vrow[0], vk[0], vtime[0] = depot, 0, g.t0
    for r in g.rows:
        o, nb = offsets[r], g.last_bucket[r] + 1
        ks = np.arange(nb)
        vrow[o:o + nb] = r
        vk[o:o + nb] = ks
        vtime[o:o + nb] = np.minimum(g.t0 + ks * g.step, g.net.deadline[r])

    sr, sk, dr, dk, _ = g.edge_arrays()
    off = np.zeros(max(rows_sorted) + 1, dtype=np.int64)
    for r, o in offsets.items():
        off[r] = o
    src = off[sr] + sk if len(sr) else sr
    dst = off[dr] + dk if len(dr) else dr
    last = np.full(off.size, -1, dtype=np.int64)
    for r, b in g.last_bucket.items():
        last[r] = b
    if len(src) and (dk > last[dr]).any():
        raise ValueError("edge points at a bucket that does not exist")

    rank_key = np.where(vrow == depot, -1, vrow)
    order = np.lexsort((vk, rank_key, vtime))
    pos = np.empty(total, dtype=np.int64)
    pos[order] = np.arange(total)
    if not len(src) or (pos[src] < pos[dst]).all():
        return [(int(vrow[i]), int(vk[i])) for i in order]

    # Kahn's algorithm
    indeg = np.bincount(dst, minlength=total)
    adj_order = np.argsort(src, kind="stable")
    s_sorted, d_sorted = src[adj_order], dst[adj_order]
    starts = np.searchsorted(s_sorted, np.arange(total + 1))
    queue = deque(int(i) for i in order if indeg[i] == 0)
    out = []
    while queue:
        u = queue.popleft()
        out.append(u)
        for v in d_sorted[starts[u]:starts[u + 1]].tolist():
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if len(out) != total:
        raise CycleError(f"time-expanded graph has a cycle through {total - len(out)} vertices")
    return [(int(vrow[i]), int(vk[i])) for i in out]


class ReachabilityGraph:
    """Requesters plus the depot; edge i -> j iff the static deadline test holds.

    Rows follow :class:`~kcharge.kinematics.Network`; every requester also has
    an edge back to the depot, whose deadline is infinite.
    """

    def __init__(self, inst: NetworkInstance):
        net = network(inst)
        self.inst = inst
        self.net = net
        self.rows = [net.row[sid] for sid in inst.requester_ids if net.deadline[net.row[sid]] > net.t0]
        nodes = [net.depot] + self.rows
        adj = np.zeros((net.n + 1, net.n + 1), dtype=bool)
        for i in nodes:
            if i == net.depot:
                base = net.t0
            else:
                base = net.t0 + (net.B - net.residual[i]) / net.rc
            for j in nodes:
                if j == i:
                    continue
                if j == net.depot:
                    adj[i, j] = True
                    continue
                if base + net.dist[i][j] / net.s <= net.deadline[j]:
                    adj[i, j] = True
        self.adj = adj
        self.out = {i: [j for j in nodes if adj[i, j]] for i in nodes}

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.adj[i, j])

    def edges(self):
        """``(src_id, dst_id, weight_m)`` with the depot reported as ``'v0'``."""
        net = self.net
        name = (lambda r: "v0" if r == net.depot else net.ids[r])
        for i, outs in self.out.items():
            for j in outs:
                yield name(i), name(j), net.dist[i][j]

    def dump(self, fh) -> None:
        for a, b, w in self.edges():
            fh.write(f"{a} {b} {w!r}\n")


def build_reachability(inst: NetworkInstance) -> ReachabilityGraph:
    return ReachabilityGraph(inst)
