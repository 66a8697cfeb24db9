"""Deep Q-learning solver trained online on the instance being solved.

A state is the partial tour (sensors after the depot, in visiting order). An
action picks an unvisited requester with a reachability edge from the tour
and inserts it at its cheapest deadline-valid position; the reward is minus
the added tour length. Episodes stop once the requirement table is zero or
no valid action is left.

Feature layout (``FEATURES``), one row per (state, candidate):

=====  =================  ==================================================
index  name               value
=====  =================  ==================================================
0      insert_delta       added length at the best slot / area diagonal
1      deadline_slack     (deadline - charge time) at the best slot / max deadline
2      table_share        share of positive table entries the candidate decrements
3      residual_fraction  B_i(t0) / B
4      x                  x / area width
5      y                  y / area height
6      feasible           1 if some slot keeps every deadline, else 0
7      visited_fraction   tour length in sensors / number of requesters
8      table_satisfied    zero table entries / table size
9      tour_distance      tour length / (diagonal * (requesters + 1))
10     elapsed            charge time of the last tour sensor / max deadline
=====  =================  ==================================================

Infeasible candidates carry ``insert_delta = 1`` and ``deadline_slack = 0``
and are never selected.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kcharge.coverage import RequirementTable, requirement_table
from kcharge.graphs import ReachabilityGraph, build_reachability
from kcharge.instance import NetworkInstance
from kcharge.kinematics import best_insertion_rows, network
from kcharge.solution import Solution, make_solution, validated
from kcharge.solvers.qnet import QNetwork

FEATURES = ("insert_delta", "deadline_slack", "table_share", "residual_fraction", "x", "y", "feasible",
            "visited_fraction", "table_satisfied", "tour_distance", "elapsed")
N_FEATURES = len(FEATURES)
INFEASIBLE_REWARD = -1e9


@dataclass(frozen=True)
class RlHyperparams:
    gamma: float = 0.9
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.8
    episodes: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    replay_capacity: int = 10_000
    hidden: tuple = (64, 64)
    max_steps: Optional[int] = None      # None -> number of requesters
    dead_end_penalty: float = 1.0        # in diagonal units, added to dead-end transitions
    contributing_only: bool = True
    keep_best: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.episodes < 1 or self.batch_size < 1 or self.replay_capacity < 1:
            raise ValueError("episodes, batch size and replay capacity must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1 and self.eps_decay_fraction > 0):
            raise ValueError("bad epsilon schedule")

    def epsilon(self, episode: int) -> float:
        horizon = max(self.eps_decay_fraction * self.episodes, 1.0)
        frac = min(1.0, episode / horizon)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


@dataclass
class PartialSolution:
    rows: list = field(default_factory=list)
    times: list = field(default_factory=list)
    distance: float = 0.0


class ChargingEnv:
    def __init__(self, inst: NetworkInstance, table: Optional[RequirementTable] = None,
                 reach: Optional[ReachabilityGraph] = None, contributing_only: bool = True):
        self.inst = inst
        self.net = net = network(inst)
        self.table0 = table if table is not None else requirement_table(inst)
        self.reach = reach or build_reachability(inst)
        self.contributing_only = contributing_only
        p = inst.params
        self.diag = p.diagonal
        rows = self.reach.rows
        self.n_req = max(len(rows), 1)
        self.max_deadline = max([net.deadline[r] for r in rows], default=1.0) or 1.0
        t = np.array(self.table0.t, dtype=np.int64)
        self.cover = np.zeros((net.n + 1, len(t)), dtype=np.int64)
        for r in rows:
            self.cover[r, list(self.table0.sig.regions_of(net.ids[r]))] = 1
        self.requester = np.zeros(net.n + 1, dtype=bool)
        self.requester[rows] = True
        pos = np.array([s.position for s in inst.sensors] + [p.depot])
        self.static = np.column_stack([
            np.append(net.residual_np[:-1] / p.battery_capacity, 0.0),
            pos[:, 0] / p.area_width,
            pos[:, 1] / p.area_height,
        ])
        self.reset()

    def reset(self) -> PartialSolution:
        self.state = PartialSolution()
        self.table = np.array(self.table0.t, dtype=np.int64)
        self.visited = np.zeros(self.net.n + 1, dtype=bool)
        self._cache = None
        return self.state

    @property
    def done(self) -> bool:
        return not self.table.any()

    @property
    def order(self) -> list:
        return [self.net.ids[r] for r in self.state.rows]

    def action_set(self) -> np.ndarray:
        """Unvisited requesters with a reachability edge from the depot or a tour sensor."""
        src = [self.net.depot] + self.state.rows
        ok = self.reach.adj[src].any(axis=0) & self.requester & ~self.visited
        if self.contributing_only:
            ok &= (self.cover @ (self.table > 0)) > 0
        return np.flatnonzero(ok)

    def state_features(self) -> np.ndarray:
        s = self.state
        elapsed = s.times[-1] if s.times else self.net.t0
        return np.array([
            len(s.rows) / self.n_req,
            float((self.table == 0).sum()) / max(len(self.table), 1),
            s.distance / (self.diag * (self.n_req + 1)),
            (elapsed - self.net.t0) / self.max_deadline,
        ])

    def candidates(self):
        """``(rows, features, feasible, insertions)`` for the current action set (cached per state)."""
        if self._cache is not None:
            return self._cache
        net, s = self.net, self.state
        cand = self.action_set()
        positive = self.table > 0
        n_pos = max(int(positive.sum()), 1)
        share = (self.cover[cand] @ positive) / n_pos if len(cand) else np.zeros(0)
        feats = np.zeros((len(cand), N_FEATURES))
        feasible = np.zeros(len(cand), dtype=bool)
        inserts = []
        for a, k in enumerate(cand.tolist()):
            ins = best_insertion_rows(net, s.rows, k, s.times)
            inserts.append(ins)
            if ins is None:
                feats[a, 0], feats[a, 1] = 1.0, 0.0
                continue
            p, new_rows, new_times = ins
            delta = net.tour_length(new_rows) - s.distance
            feats[a, 0] = np.clip(delta / self.diag, -1.0, 1.0)
            feats[a, 1] = np.clip((net.deadline[k] - new_times[p]) / self.max_deadline, 0.0, 1.0)
            feats[a, 6] = 1.0
            feasible[a] = True
        if len(cand):
            feats[:, 2] = share
            feats[:, 3:6] = self.static[cand]
            feats[:, 7:] = self.state_features()
        self._cache = (cand, feats, feasible, inserts)
        return self._cache

    def apply(self, a: int) -> float:
        """Insert candidate ``a`` of the current action set; returns the reward in metres."""
        cand, _, _, inserts = self.candidates()
        ins = inserts[a]
        if ins is None:
            return INFEASIBLE_REWARD
        k = int(cand[a])
        _, new_rows, new_times = ins
        new_distance = self.net.tour_length(new_rows)
        reward = -(new_distance - self.state.distance)
        self.state = PartialSolution(new_rows, new_times, new_distance)
        self.visited[k] = True
        self.table = np.maximum(self.table - self.cover[k], 0)
        self._cache = None
        return reward


def encode(S: PartialSolution, candidate: int, inst: NetworkInstance, table: RequirementTable) -> np.ndarray:
    """Feature vector for inserting sensor ``candidate`` into ``S``.

    ``S.rows`` are network rows; ``table`` is the current requirement table.
    """
    env = ChargingEnv(inst, table)
    net = env.net
    env.state = PartialSolution(list(S.rows), list(S.times), net.tour_length(S.rows))
    env.visited[S.rows] = True
    k = net.row[candidate]
    cand, feats, _, _ = env.candidates()
    hit = np.flatnonzero(cand == k)
    if len(hit) == 0:
        raise ValueError(f"sensor {candidate} is not in the action set of this state")
    return feats[hit[0]]


def reward(order, candidate: int, inst: NetworkInstance) -> float:
    """Minus the added length of the cheapest valid insertion, or ``INFEASIBLE_REWARD``."""
    net = network(inst)
    rows = net.rows_of(order)
    ins = best_insertion_rows(net, rows, net.row[candidate])
    if ins is None:
        return INFEASIBLE_REWARD
    return -(net.tour_length(ins[1]) - net.tour_length(rows))


def q_value(policy, features) -> float:
    net = policy.net if isinstance(policy, QPolicy) else policy
    return float(net.forward(features)[0])


class ReplayBuffer:
    """Fixed-capacity ring; the oldest transition is overwritten first."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.items: list = []
        self._next = 0

    def __len__(self):
        return len(self.items)

    def push(self, transition) -> None:
        if len(self.items) < self.capacity:
            self.items.append(transition)
        else:
            self.items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, size: int) -> list:
        idx = rng.choice(len(self.items), size=min(size, len(self.items)), replace=False)
        return [self.items[i] for i in idx]


@dataclass
class Transition:
    features: np.ndarray            # (state, action) row
    reward: float                   # normalised training reward
    next_features: Optional[np.ndarray]  # feasible candidate rows of the next state
    terminal: bool


@dataclass
class QPolicy:
    net: QNetwork
    hp: RlHyperparams
    episode_loss: list = field(default_factory=list)
    episode_return: list = field(default_factory=list)
    best_order: Optional[list] = None
    best_distance: float = float("inf")
    no_action: bool = False


def targets(net: QNetwork, batch: list, gamma: float) -> np.ndarray:
    """One-step Q-learning targets: r, plus gamma * max Q(S', .) when S' is non-terminal."""
    y = np.array([t.reward for t in batch], dtype=float)
    live = [i for i, t in enumerate(batch) if not t.terminal and t.next_features is not None
            and len(t.next_features)]
    if live and gamma > 0:
        stacked = np.vstack([batch[i].next_features for i in live])
        q = net.forward(stacked)
        starts = np.cumsum([0] + [len(batch[i].next_features) for i in live[:-1]])
        y[live] += gamma * np.maximum.reduceat(q, starts)
    return y


def train(inst: NetworkInstance, hp: RlHyperparams = RlHyperparams(),
          table: Optional[RequirementTable] = None) -> QPolicy:
    env = ChargingEnv(inst, table, contributing_only=hp.contributing_only)
    rng = np.random.default_rng(hp.seed)
    net = QNetwork(N_FEATURES, hp.hidden, seed=hp.seed)
    policy = QPolicy(net, hp)
    if env.done:
        policy.best_order, policy.best_distance = [], 0.0
        return policy
    buffer = ReplayBuffer(hp.replay_capacity)
    max_steps = hp.max_steps or len(env.reach.rows)
    diag = env.diag

    for episode in range(hp.episodes):
        env.reset()
        eps = hp.epsilon(episode)
        losses, ret = [], 0.0
        cand, feats, feasible, _ = env.candidates()
        if not feasible.any():
            policy.no_action = True
            break
        for _ in range(max_steps):
            choices = np.flatnonzero(feasible)
            if rng.random() < eps:
                a = int(choices[rng.integers(len(choices))])
            else:
                a = int(choices[np.argmax(net.forward(feats[choices]))])
            x = feats[a].copy()
            r = env.apply(a)
            ret += r
            r_train = r / diag
            if env.done:
                nxt, terminal = None, True
            else:
                _, nfeats, nfeasible, _ = env.candidates()
                nxt = nfeats[nfeasible]
                terminal = not nfeasible.any()
                if terminal:
                    r_train -= hp.dead_end_penalty
            if r > INFEASIBLE_REWARD:
                buffer.push(Transition(x, r_train, nxt, terminal))
            batch = [t for t in buffer.sample(rng, hp.batch_size) if t.reward > INFEASIBLE_REWARD / diag]
            if batch:
                X = np.vstack([t.features for t in batch])
                loss, grads = net.loss_and_grad(X, targets(net, batch, hp.gamma))
                net.sgd_step(grads, hp.learning_rate)
                losses.append(loss)
            if terminal:
                break
            cand, feats, feasible, _ = env.candidates()
        if env.done and env.state.distance < policy.best_distance:
            policy.best_distance = env.state.distance
            policy.best_order = env.order
        policy.episode_loss.append(float(np.mean(losses)) if losses else float("nan"))
        policy.episode_return.append(ret)
    if not net.all_finite():
        raise FloatingPointError("Q-network parameters diverged")
    return policy


def rollout(policy, inst: NetworkInstance, table: Optional[RequirementTable] = None) -> Optional[Solution]:
    """Greedy argmax over feasible actions until the table is zero; None at a dead end."""
    net = policy.net if isinstance(policy, QPolicy) else policy
    contributing = policy.hp.contributing_only if isinstance(policy, QPolicy) else True
    env = ChargingEnv(inst, table, contributing_only=contributing)
    while not env.done:
        _, feats, feasible, _ = env.candidates()
        choices = np.flatnonzero(feasible)
        if len(choices) == 0:
            return None
        env.apply(int(choices[np.argmax(net.forward(feats[choices]))]))
    sol = make_solution(env.order, inst, "dqn")
    return validated(sol, inst, env.table0.sig.grid_spacing)


def solve_dqn(inst: NetworkInstance, table: Optional[RequirementTable] = None,
              hp: RlHyperparams = RlHyperparams()) -> Optional[Solution]:
    """Train on ``inst`` then roll out greedily.

    With ``hp.keep_best`` the shortest complete tour met during training is
    returned when it beats the greedy rollout.
    """
    table = table if table is not None else requirement_table(inst)
    t_start = time.monotonic()
    policy = train(inst, hp, table)
    sol = rollout(policy, inst, table)
    rollout_distance = sol.distance if sol is not None else None
    if hp.keep_best and policy.best_order is not None and (sol is None or policy.best_distance < sol.distance):
        sol = validated(make_solution(policy.best_order, inst, "dqn"), inst, table.sig.grid_spacing)
    if sol is None:
        return None
    stats = dict(rollout_distance=rollout_distance, best_seen=policy.best_distance,
                 train_seconds=time.monotonic() - t_start, no_action=policy.no_action)
    return Solution(sol.order, sol.evaluation, "dqn", stats)
