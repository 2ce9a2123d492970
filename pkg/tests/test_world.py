import math

import pytest
from hypothesis import given, settings, strategies as st

from repdsr.packets import BROADCAST, Kind, Packet
from repdsr.sim import RngStream
from repdsr.world import (InterfaceQueue, Position, RadioParams, RandomWaypoint, TraceMobility,
                          UnknownNode, World, read_trace, write_trace)


def static_world(points, rng=250.0):
    mob = [TraceMobility([(0.0, x, y, 0.0)], 1000, 1000) for x, y in points]
    return World(mob, RadioParams(range=rng), 1000, 1000)


def test_linear_motion_midpoint():
    m = TraceMobility([(0.0, 0.0, 0.0, 0.0), (10.0, 100.0, 0.0, 10.0)], 1000, 1000)
    assert m.position_at(15.0) == Position(50.0, 0.0)
    assert m.position_at(20.0) == Position(100.0, 0.0)
    assert m.position_at(500.0) == Position(100.0, 0.0)


def test_pause_window_holds_destination_exactly():
    rw = RandomWaypoint(Position(10, 10), 1000, 1000, 10.0, 50.0, RngStream(3, "mobility/0"))
    assert rw.position_at(25.0) == Position(10, 10)
    leg = rw.next_waypoint()
    mid_pause = (leg.arrive_at + leg.pause_until) / 2
    assert rw.position_at(mid_pause) == leg.destination


def test_pause_equal_to_horizon_keeps_node_static():
    rw = RandomWaypoint(Position(300, 400), 1000, 1000, 10.0, 900.0, RngStream(5, "mobility/1"))
    for t in (0.0, 100.0, 450.0, 899.9, 900.0):
        assert rw.position_at(t) == Position(300, 400)


def test_zero_pause_legs_are_back_to_back():
    rw = RandomWaypoint(Position(0, 0), 1000, 1000, 10.0, 0.0, RngStream(9, "mobility/2"))
    rw.position_at(2000.0)
    for a, b in zip(rw.legs, rw.legs[1:]):
        assert b.depart_at == a.arrive_at


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32))
def test_waypoint_draws_respect_bounds(seed):
    rw = RandomWaypoint(Position(500, 500), 1000, 1000, 10.0, 0.0, RngStream(seed, "mobility/0"))
    for _ in range(50):
        leg = rw.next_waypoint()
        assert 0.0 < leg.speed <= 10.0
        assert 0 <= leg.destination.x <= 1000 and 0 <= leg.destination.y <= 1000


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32), st.floats(0, 900))
def test_positions_never_leave_field(seed, t):
    rw = RandomWaypoint(Position(999.9, 0.1), 1000, 1000, 10.0, 5.0, RngStream(seed, "mobility/0"))
    p = rw.position_at(t)
    assert 0 <= p.x <= 1000 and 0 <= p.y <= 1000


def test_range_boundary_is_inclusive():
    w = static_world([(0.0, 0.0), (250.0, 0.0), (500.1, 0.0)])
    assert w.neighbors_of(0, 0.0) == {1}
    assert w.neighbors_of(1, 0.0) == {0}
    w2 = static_world([(0.0, 0.0), (250.1, 0.0)])
    assert w2.neighbors_of(0, 0.0) == set()


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(0, 1000), st.floats(0, 1000)), min_size=2, max_size=25))
def test_neighbor_relation_matches_distance_oracle(points):
    w = static_world(points)
    for i, (xi, yi) in enumerate(points):
        expected = {j for j, (xj, yj) in enumerate(points)
                    if j != i and (xi - xj) ** 2 + (yi - yj) ** 2 <= 250.0 ** 2}
        assert w.neighbors_of(i, 0.0) == expected
        for j in expected:
            assert i in w.neighbors_of(j, 0.0)


def test_unknown_node_faults():
    w = static_world([(0, 0), (10, 10)])
    with pytest.raises(UnknownNode):
        w.position_at(5, 0.0)
    with pytest.raises(UnknownNode):
        w.neighbors_of(-1, 0.0)


def _data(next_hop, size=64):
    return Packet(Kind.DATA, 0, 9, 1, size, route=(0, next_hop), segments_left=0, next_hop=next_hop)


def test_transmission_delay_for_64_bytes():
    w = static_world([(0, 0), (100, 0)])
    assert math.isclose(w.tx_delay(_data(1)), 0.000256, rel_tol=0, abs_tol=1e-15)
    rep = w.transmit(0, _data(1), 3.0)
    assert math.isclose(rep.arrive_at, 3.000256)


def test_out_of_range_unicast_is_undelivered_but_overheard():
    w = static_world([(0, 0), (100, 0), (600, 0)])
    rep = w.transmit(0, _data(2), 0.0)
    assert not rep.delivered
    assert rep.receivers == [1]


def test_broadcast_reaches_all_neighbors():
    w = static_world([(0, 0), (100, 0), (0, 200), (900, 900)])
    frame = Packet(Kind.RREQ, 0, BROADCAST, 1, 40)
    rep = w.transmit(0, frame, 0.0)
    assert rep.addressed is None and rep.delivered
    assert set(rep.receivers) == {1, 2}


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(0, 1000), st.floats(0, 1000)), min_size=2, max_size=15),
       st.data())
def test_addressed_hop_in_range_is_always_among_receivers(points, data):
    w = static_world(points)
    nxt = data.draw(st.integers(1, len(points) - 1))
    rep = w.transmit(0, _data(nxt), 0.0)
    assert rep.delivered == (nxt in w.neighbors_of(0, 0.0))
    if rep.delivered:
        assert nxt in rep.receivers


def test_queue_boundary_and_conservation():
    q = InterfaceQueue(50)
    for _ in range(49):
        assert q.enqueue(_data(1))
    assert q.enqueue(_data(1)) and q.occupancy == 50
    assert not q.enqueue(_data(1))
    assert q.dropped == 1
    q.dequeue()
    assert q.enqueued - q.dequeued == q.occupancy == 49


@given(st.lists(st.booleans(), max_size=300))
def test_queue_conservation_under_random_ops(ops):
    q = InterfaceQueue(7)
    for push in ops:
        if push:
            q.enqueue(_data(1))
        elif q.occupancy:
            q.dequeue()
        assert q.enqueued - q.dequeued == q.occupancy <= q.capacity


def test_trace_round_trip(tmp_path):
    rw = RandomWaypoint(Position(120, 80), 1000, 1000, 10.0, 30.0, RngStream(11, "mobility/0"))
    records = rw.trace_records(0, 900.0)
    path = tmp_path / "mv.trace"
    write_trace(path, records)
    replay = TraceMobility(read_trace(path)[0], 1000, 1000)
    for k in range(0, 9000, 7):
        t = k / 10
        a, b = rw.position_at(t), replay.position_at(t)
        assert math.isclose(a.x, b.x, abs_tol=1e-6) and math.isclose(a.y, b.y, abs_tol=1e-6)


def test_trace_needs_placement_record():
    with pytest.raises(ValueError):
        TraceMobility([(0.0, 1.0, 1.0, 5.0)], 1000, 1000)
