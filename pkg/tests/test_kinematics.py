import math

import pytest
from hypothesis import given, settings, strategies as st

from helpers import instance, params, sensor, small
from kcharge.kinematics import (
    INFEASIBLE, PathError, advance, best_insertion, evaluate_path, network, residual_energy,
)
from kcharge.instance import SensorNode

P = params(area_width=1000.0, area_height=1000.0)


def test_residual_energy():
    node = SensorNode(0, (0.0, 0.0), 4000.0, 0.5)
    assert residual_energy(node, 1000.0) == 3500.0
    assert residual_energy(node, 0.0) == 4000.0
    assert residual_energy(node, 9000.0) == 0.0


def test_advance_hand_value():
    # B_i(100) = 5450 - 0.5 * 100 = 5400 J
    node_i = SensorNode(0, (0.0, 0.0), 5450.0, 0.5)
    node_j = SensorNode(1, (200.0, 0.0), 250.0, 0.5)   # D_j = 500 s
    assert advance(100.0, node_i, node_j, P) == 410.0


def test_advance_misses_deadline():
    node_i = SensorNode(0, (0.0, 0.0), 5450.0, 0.5)
    node_j = SensorNode(1, (200.0, 0.0), 200.0, 0.5)   # D_j = 400 s
    assert advance(100.0, node_i, node_j, P) == INFEASIBLE


def test_advance_zero_travel_zero_charge():
    node_i = SensorNode(0, (5.0, 5.0), 10800.0, 0.5)
    node_j = SensorNode(1, (5.0, 5.0), 300.0, 0.5)
    assert advance(0.0, node_i, node_j, P) == 0.0


def test_advance_from_depot_has_no_charge_term():
    node_j = SensorNode(1, (300.0, 400.0), 500.0, 1.0)
    assert advance(0.0, None, node_j, P) == 100.0


def test_advance_dead_sensor():
    node_j = SensorNode(1, (0.0, 0.0), 0.0, 1.0)
    assert advance(0.0, None, node_j, P) == INFEASIBLE


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0, 5000), dt=st.floats(0, 5000), res=st.floats(0, 10800), beta=st.floats(0.1, 2.0),
       x=st.floats(0, 1000), deadline=st.floats(1, 50000))
def test_advance_monotone_in_start_time(t, dt, res, beta, x, deadline):
    node_i = SensorNode(0, (0.0, 0.0), res, beta)
    node_j = SensorNode(1, (x, 0.0), deadline * 0.1, 0.1)
    a = advance(t, node_i, node_j, P)
    b = advance(t + dt, node_i, node_j, P)
    assert a <= b


def test_single_sensor_path():
    inst = instance([sensor(0, 100, 0, deadline=60.0, beta=1.0)], area_width=200.0)
    ev = evaluate_path([0], inst)
    assert ev.feasible
    assert ev.charge_times == (20.0,)
    assert ev.travel_distance == 200.0
    assert ev.travel_energy == 120000.0
    assert ev.violated_at is None


def test_empty_path():
    inst = instance([sensor(0, 100, 0, deadline=60.0, beta=1.0)], area_width=200.0)
    ev = evaluate_path([], inst)
    assert ev.feasible and ev.travel_distance == 0.0 and ev.travel_energy == 0.0


def test_open_path_has_no_return_leg():
    inst = instance([sensor(0, 100, 0, deadline=60.0, beta=1.0)], area_width=200.0, include_return=False)
    assert evaluate_path([0], inst).travel_distance == 100.0


def test_violation_reports_second_sensor():
    # the first charge takes hundreds of seconds; the second deadline is 100 s
    inst = instance([sensor(0, 50, 0, deadline=5000.0), sensor(1, 60, 0, deadline=100.0)])
    ev = evaluate_path([0, 1], inst)
    assert not ev.feasible
    assert ev.violated_at == 1
    assert ev.charge_times[0] == 10.0 and ev.charge_times[1] == INFEASIBLE
    assert evaluate_path([1, 0], inst).feasible


def test_repeat_and_unknown_ids_rejected():
    inst = instance([sensor(0, 50, 0, deadline=5000.0)])
    with pytest.raises(PathError):
        evaluate_path([0, 0], inst)
    with pytest.raises(PathError):
        evaluate_path([4], inst)


def insertion_instance(cand_xy):
    sensors = [sensor(1, 10, 0, deadline=9000.0), sensor(2, *cand_xy, deadline=9000.0)]
    return instance(sensors)


def test_collinear_insertion_costs_nothing():
    inst = insertion_instance((5, 0))
    ins = best_insertion([1], 2, inst)
    assert ins.delta_distance == 0.0
    assert ins.position == 0          # tie with the closing slot; earliest wins
    assert ins.order == (2, 1)


def test_insertion_off_the_line():
    sensors = [sensor(1, 4, 0, deadline=9000.0), sensor(2, 4, 3, deadline=9000.0)]
    ins = best_insertion([1], 2, instance(sensors))
    assert ins.delta_distance == 4.0


def test_dead_candidate_has_no_slot():
    sensors = [sensor(1, 10, 0, deadline=9000.0), sensor(2, 90, 90, deadline=1.0)]
    assert best_insertion([1], 2, instance(sensors)) is None


def test_insertion_respects_later_deadlines():
    # inserting before sensor 1 would delay it past its deadline, so the closing slot is used
    sensors = [sensor(1, 10, 0, deadline=100.0), sensor(2, 5, 0, deadline=9000.0)]
    ins = best_insertion([1], 2, instance(sensors))
    assert ins.order == (1, 2)
    assert evaluate_path(ins.order, instance(sensors)).feasible


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 30), pick=st.integers(0, 1000))
def test_insertion_delta_matches_path_lengths(seed, pick):
    inst = small(seed, n=14, k=1, alpha=0.7)
    ids = list(inst.requester_ids)
    order = []
    for sid in ids[pick % max(len(ids), 1):] + ids:
        if sid in order:
            continue
        ins = best_insertion(order, sid, inst)
        if ins is None:
            continue
        before = evaluate_path(order, inst).travel_distance
        after = evaluate_path(ins.order, inst)
        assert after.feasible
        assert ins.delta_distance == after.travel_distance - before
        assert ins.charge_times == after.charge_times
        order = list(ins.order)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 30), perm_seed=st.integers(0, 1000))
def test_prefix_closure(seed, perm_seed):
    import random
    inst = small(seed, n=14, k=1, alpha=0.7)
    ids = list(inst.requester_ids)
    random.Random(perm_seed).shuffle(ids)
    ev = evaluate_path(ids, inst)
    cut = len(ids) if ev.feasible else ids.index(ev.violated_at)
    for m in range(cut + 1):
        assert evaluate_path(ids[:m], inst).feasible
    assert ev.travel_energy == ev.travel_distance * 600.0


def test_network_distances_are_euclidean():
    inst = small(1)
    net = network(inst)
    for i, a in enumerate(inst.sensors):
        for j, b in enumerate(inst.sensors):
            assert net.dist[i][j] == math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])
