import numpy as np
import pytest

from helpers import TOY_SEED, full, instance, max_relative_error, random_small_net, sensor, small, toy
from kcharge.coverage import apply_charge, requirement_table
from kcharge.kinematics import best_insertion, evaluate_path, network
from kcharge.solution import check_solution
from kcharge.solvers.exact import solve_exact
from kcharge.solvers.qnet import QNetwork
from kcharge.solvers.rl import (
    FEATURES, INFEASIBLE_REWARD, N_FEATURES, ChargingEnv, PartialSolution, QPolicy, ReplayBuffer, RlHyperparams, Transition,
    encode, q_value, reward, rollout, solve_dqn, targets, train,
)


# -- network -----------------------------------------------------------------

def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    for trial in range(10):
        net, X, y = random_small_net(rng, trial)
        assert max_relative_error(net, X, y) < 1e-4


def test_zero_network_outputs_zero():
    net = QNetwork(N_FEATURES, zero=True)
    x = np.random.default_rng(0).uniform(-1, 1, size=N_FEATURES)
    assert q_value(net, x) == 0.0


def test_output_reacts_to_parameters():
    net = QNetwork(N_FEATURES, seed=1)
    x = np.random.default_rng(0).uniform(-1, 1, size=N_FEATURES)
    before = q_value(net, x)
    net.params["b3"] += 0.5
    net.params["W1"][0, 0] += 0.3
    assert q_value(net, x) != before


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        QNetwork(4).forward(np.zeros(5))


def test_sgd_reduces_loss_on_a_fixed_batch():
    rng = np.random.default_rng(3)
    net = QNetwork(4, hidden=(8, 8), seed=0)
    X, y = rng.normal(size=(16, 4)), rng.normal(size=16)
    first = net.loss_and_grad(X, y)[0]
    for _ in range(200):
        net.sgd_step(net.loss_and_grad(X, y)[1], 1e-2)
    assert net.loss_and_grad(X, y)[0] < first


def test_parameter_dump_round_trip(tmp_path):
    net = QNetwork(N_FEATURES, hidden=(5, 4), seed=7)
    path = tmp_path / "policy.txt"
    net.save(path)
    back = QNetwork.load(path)
    assert path.read_text().startswith("kcharge-qnet/1\n")
    for name in net.params:
        assert np.array_equal(net.params[name], back.params[name])
    with pytest.raises(ValueError):
        QNetwork.loads("something else\n")


# -- environment and features ----------------------------------------------------

def test_empty_tour_features():
    inst = small(3)
    table = requirement_table(inst)
    env = ChargingEnv(inst, table)
    cand, feats, feasible, _ = env.candidates()
    assert feats.shape == (len(cand), len(FEATURES))
    assert (feats[:, FEATURES.index("visited_fraction")] == 0).all()
    x = encode(PartialSolution(), network(inst).ids[cand[0]], inst, table)
    assert x[FEATURES.index("visited_fraction")] == 0.0


def test_infeasible_candidates_are_flagged_and_masked():
    # once sensor 2 (tight deadline) is in the tour, sensor 1 fits in no slot
    inst = instance([sensor(0, 10, 0, deadline=9000.0), sensor(1, 90, 0, deadline=120.0),
                     sensor(2, 10, 10, deadline=10.0)], coverage_k=3)
    table = requirement_table(inst)
    env = ChargingEnv(inst, table)
    net = env.net
    env.apply(int(np.flatnonzero(env.candidates()[0] == net.row[2])[0]))
    env.apply(int(np.flatnonzero(env.candidates()[0] == net.row[0])[0]))
    cand, feats, feasible, inserts = env.candidates()
    a = int(np.flatnonzero(cand == net.row[1])[0])
    assert not feasible[a] and inserts[a] is None
    assert feats[a, FEATURES.index("feasible")] == 0.0
    assert env.apply(a) < -1e8
    policy = QPolicy(QNetwork(N_FEATURES, seed=0), RlHyperparams())
    assert rollout(policy, inst, table) is None or check_solution(rollout(policy, inst, table), inst)


def test_feature_vectors_have_the_documented_length_and_range():
    rng = np.random.default_rng(0)
    pairs = 0
    for seed in range(40):
        inst = small(seed, n=14, k=1, alpha=0.7)
        env = ChargingEnv(inst)
        while pairs < 100 * (seed + 1) // 40 + 1:
            cand, feats, feasible, _ = env.candidates()
            if not feasible.any() or env.done:
                break
            assert feats.shape[1] == N_FEATURES
            assert (feats >= -1).all() and (feats <= 1).all()
            pairs += len(cand)
            env.apply(int(rng.choice(np.flatnonzero(feasible))))
    assert pairs >= 100


def test_rewards_telescope_to_minus_tour_length():
    inst = small(16)
    env = ChargingEnv(inst)
    total = 0.0
    while not env.done:
        _, _, feasible, _ = env.candidates()
        prev = env.state.distance
        r = env.apply(int(np.flatnonzero(feasible)[0]))
        assert r == -(env.state.distance - prev)
        total += r
    assert total == pytest.approx(-evaluate_path(env.order, inst).travel_distance, abs=1e-9)


def test_reward_function_matches_insertion():
    inst = small(16)
    ids = inst.requester_ids
    for order, cand in [([], ids[0]), ([ids[0]], ids[1]), ([ids[1], ids[0]], ids[2])]:
        ins = best_insertion(order, cand, inst)
        expected = INFEASIBLE_REWARD if ins is None else -ins.delta_distance
        assert reward(order, cand, inst) == expected
    dead = instance([sensor(0, 10, 0, deadline=9000.0), sensor(1, 90, 90, deadline=1.0)], coverage_k=2)
    assert reward([0], 1, dead) == INFEASIBLE_REWARD


# -- replay and targets ---------------------------------------------------------------

def test_replay_buffer_evicts_the_oldest():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.push(i)
    assert len(buf) == 3
    assert sorted(buf.items) == [2, 3, 4]
    sample = buf.sample(np.random.default_rng(0), 10)
    assert sorted(sample) == [2, 3, 4]


def test_replay_sample_is_without_replacement():
    buf = ReplayBuffer(100)
    for i in range(50):
        buf.push(i)
    s = buf.sample(np.random.default_rng(1), 32)
    assert len(s) == len(set(s)) == 32


def test_terminal_targets_are_the_reward():
    net = QNetwork(N_FEATURES, seed=0)
    x = np.zeros(N_FEATURES)
    nxt = np.random.default_rng(0).uniform(-1, 1, size=(3, N_FEATURES))
    batch = [Transition(x, -0.25, None, True), Transition(x, -0.5, nxt, False), Transition(x, 0.1, nxt, True)]
    y = targets(net, batch, 0.9)
    assert y[0] == -0.25 and y[2] == 0.1
    assert y[1] == -0.5 + 0.9 * net.forward(nxt).max()


# -- training and rollout --------------------------------------------------------------

def test_toy_rollout_reaches_the_oracle_optimum():
    inst = toy()
    table = requirement_table(inst)
    ref = solve_exact(inst, table)
    policy = train(inst, RlHyperparams(seed=TOY_SEED), table)
    sol = rollout(policy, inst, table)
    assert sol.distance == ref.distance
    assert set(sol.order) == set(ref.order)


def test_training_loss_falls():
    inst = toy()
    policy = train(inst, RlHyperparams(seed=1), requirement_table(inst))
    losses = np.array(policy.episode_loss)
    tenth = len(losses) // 10
    assert np.nanmean(losses[-tenth:]) < np.nanmean(losses[:tenth])


def test_training_is_deterministic():
    inst = small(16)
    hp = RlHyperparams(episodes=40, seed=5)
    a, b = train(inst, hp), train(inst, hp)
    for name in a.net.params:
        assert np.array_equal(a.net.params[name], b.net.params[name])
    assert a.net.all_finite()


def test_nothing_to_charge():
    inst = instance([full(0, 50, 50), sensor(1, 10, 10, deadline=500.0)], coverage_k=1)
    table = requirement_table(inst)
    policy = train(inst, RlHyperparams(episodes=5), table)
    assert rollout(policy, inst, table).order == ()
    assert solve_dqn(inst, table, RlHyperparams(episodes=5)).order == ()


def test_isolated_depot_is_flagged():
    # the only requester is already past reach from the depot
    inst = instance([sensor(0, 90, 90, deadline=1.0)], coverage_k=1)
    policy = train(inst, RlHyperparams(episodes=5), requirement_table(inst))
    assert policy.no_action
    assert rollout(policy, inst, requirement_table(inst)) is None


def test_rollouts_validate():
    hp = RlHyperparams(episodes=60, seed=2)
    for seed in range(20):
        inst = small(seed)
        table = requirement_table(inst)
        sol = solve_dqn(inst, table, hp)
        if sol is not None:
            assert check_solution(sol, inst)
            ref = solve_exact(inst, table)
            assert sol.distance >= ref.distance


def test_epsilon_schedule():
    hp = RlHyperparams(episodes=100)
    assert hp.epsilon(0) == 1.0
    assert hp.epsilon(40) == pytest.approx(1.0 - 0.95 * 0.5)
    assert hp.epsilon(80) == pytest.approx(0.05)
    assert hp.epsilon(99) == pytest.approx(0.05)


@pytest.mark.parametrize("kw", [dict(gamma=1.5), dict(episodes=0), dict(learning_rate=0.0)])
def test_hyperparameter_validation(kw):
    with pytest.raises(ValueError):
        RlHyperparams(**kw)


def test_table_share_feature():
    inst = small(16)
    table = requirement_table(inst)
    env = ChargingEnv(inst, table)
    cand, feats, _, _ = env.candidates()
    positive = np.array(table.t) > 0
    for a, row in enumerate(cand.tolist()):
        sid = env.net.ids[row]
        after = np.array(apply_charge(table, sid).t)
        dropped = (np.array(table.t) - after)[positive].astype(bool).sum()
        assert feats[a, FEATURES.index("table_share")] == dropped / positive.sum()
