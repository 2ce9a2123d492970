import random

import pytest
from hypothesis import given, settings, strategies as st

from repdsr.ids import (MALICIOUS, NORMAL, SUSPICIOUS, IdsConstants, KnockProbe, ReputationSystem,
                        WarningMessage, congestion_parameter, malicious_drop_threshold, path_priority)
from repdsr.packets import PacketIdentity
from repdsr.sim import Engine


class FakeAgent:
    """Stands in for the routing agent: a clock, a neighbour set and probe plumbing."""

    def __init__(self, neighbors=(), probe_route=True):
        self.engine = Engine()
        self.neighbors = set(neighbors)
        self.probe_route = probe_route
        self.probes = []
        self.declared = []

    @property
    def now(self):
        return self.engine.now

    def is_neighbor(self, other):
        return other in self.neighbors

    def send_probe(self, target):
        if not self.probe_route:
            return None
        probe = KnockProbe(target, (0, target, 99), PacketIdentity(0, 99, 17, len(self.probes) + 1), 1)
        self.probes.append(probe)
        return probe

    def on_declared_malicious(self, subject):
        self.declared.append(subject)


def system(neighbors=(1, 2, 3), **kw):
    agent = FakeAgent(neighbors, **kw)
    return ReputationSystem(0, IdsConstants(), agent), agent


def set_value(rs, subject, value):
    rs._set(rs.record(subject), value, "test")


def breach(rs, subject, windows=1):
    for _ in range(windows):
        rs.on_register(subject)
        rs.close_window(0.0)


# -- formulas ------------------------------------------------------------------

@pytest.mark.parametrize("occ,cap,cp", [(25, 50, 0.5), (0, 50, 0.0), (50, 50, 1.0)])
def test_congestion_parameter_examples(occ, cap, cp):
    assert congestion_parameter(occ, cap) == cp


def test_congestion_parameter_rejects_bad_inputs():
    with pytest.raises(ValueError):
        congestion_parameter(0, 0)
    with pytest.raises(ValueError):
        congestion_parameter(51, 50)


@pytest.mark.parametrize("rate,cp,w,thr", [(4, 0.5, 1.0, 2.0), (4, 1.0, 1.25, 5.0), (4, 0.0, 1.0, 0.0)])
def test_drop_threshold_examples(rate, cp, w, thr):
    assert malicious_drop_threshold(rate, cp, w) == thr


def test_path_priority_examples():
    assert path_priority(-5, 2) == pytest.approx(0.1, abs=1e-15)
    assert path_priority(0, 4) == 0.25
    assert path_priority(-5, 2) > path_priority(-5, 4)
    with pytest.raises(ValueError):
        path_priority(0, 0)


# -- window evaluation ---------------------------------------------------------

def test_breach_applies_self_weight():
    rs, _ = system()
    set_value(rs, 1, -40)
    for _ in range(5):
        rs.on_register(1)
    rs.close_window(0.5)  # threshold 2.0, missing 5
    assert rs.value(1) == -45 and rs.classification(1) is SUSPICIOUS


def test_clean_window_adds_appraisal_up_to_zero():
    rs, _ = system()
    set_value(rs, 1, -3)
    rs.on_register(1)
    rs.on_pack(1)
    rs.close_window(0.0)
    assert rs.value(1) == -2
    rs2, _ = system()
    rs2.on_register(1)
    rs2.on_pack(1)
    rs2.close_window(0.0)
    assert rs2.value(1) == 0


def test_missing_within_threshold_is_tolerated():
    rs, _ = system()
    for _ in range(3):
        rs.on_register(1)
    rs.on_pack(1)
    rs.close_window(1.0)  # threshold 4, missing 2
    assert rs.value(1) == 0


def test_ten_breaches_declare_malicious():
    rs, agent = system()
    breach(rs, 1, 9)
    assert rs.value(1) == -45 and not rs.is_malicious(1)
    breach(rs, 1)
    assert rs.is_malicious(1) and rs.value(1) == -50
    assert agent.declared == [1]
    assert rs.declared[0][1:] == (1, "self")


def test_rerr_clears_window_activity():
    rs, _ = system()
    for _ in range(4):
        rs.on_register(1)
    rs.clear_activity(1)
    rs.close_window(0.0)
    assert rs.value(1) == 0


def test_breach_every_kth_window_trends_down():
    c = IdsConstants()
    k_limit = abs(c.w_self) / c.positive_appraisal + 1
    for k in range(1, int(k_limit)):
        rs, _ = system()
        for w in range(12 * k):
            rs.on_register(1)
            if w % k != 0:
                rs.on_pack(1)
            rs.close_window(0.0)
        assert rs.value(1) < 0, k


# -- second-hand evidence ------------------------------------------------------

def test_warning_decrements_and_clamps():
    rs, _ = system()
    set_value(rs, 1, -10)
    assert rs.apply_warning(WarningMessage(2, 1, (2, 1))) == "decremented"
    assert rs.value(1) == -12
    set_value(rs, 1, -34)
    rs.apply_warning(WarningMessage(2, 1, (2, 2)))
    assert rs.value(1) == -35


def test_warning_at_suspicious_floor_launches_knock():
    rs, agent = system()
    set_value(rs, 1, -35)
    assert rs.apply_warning(WarningMessage(2, 1, (2, 1))) == "knock"
    assert rs.value(1) == -35 and len(agent.probes) == 1


def test_warning_about_non_neighbor_is_ignored():
    rs, _ = system(neighbors=(2,))
    assert rs.apply_warning(WarningMessage(2, 7, (2, 1))) == "ignored"
    assert rs.value(7) == 0


def test_duplicate_warning_is_ignored():
    rs, _ = system()
    w = WarningMessage(2, 1, (2, 5))
    rs.apply_warning(w)
    assert rs.apply_warning(w) == "duplicate"
    assert rs.value(1) == -2


def test_avoid_citation_weights_and_dedup():
    rs, _ = system()
    set_value(rs, 3, -5)
    rs.apply_avoid_citation(3, (9, 1))
    assert rs.value(3) == -6
    assert rs.apply_avoid_citation(3, (9, 1)) == "duplicate"
    assert rs.value(3) == -6
    assert rs.apply_avoid_citation(0, (9, 1)) == "self"


def test_avoid_citation_at_floor_triggers_knock_without_decrement():
    rs, agent = system()
    set_value(rs, 3, -35)
    assert rs.apply_avoid_citation(3, (4, 4)) == "knock"
    assert rs.value(3) == -35 and agent.probes


@settings(max_examples=60)
@given(st.lists(st.tuples(st.sampled_from(["warn", "avoid"]), st.integers(1, 3)), max_size=200))
def test_second_hand_alone_never_passes_floor(events):
    rs, agent = system(probe_route=False)
    for k, (kind, subject) in enumerate(events):
        if kind == "warn":
            rs.apply_warning(WarningMessage(9, subject, (9, k)))
        else:
            rs.apply_avoid_citation(subject, (8, k))
        for s in (1, 2, 3):
            assert rs.value(s) >= -35
            assert rs.classification(s) is not MALICIOUS
    assert agent.declared == []


def test_declaring_without_first_hand_evidence_is_forbidden():
    rs, _ = system()
    with pytest.raises(AssertionError):
        rs.declare_malicious(1, "hearsay")


# -- knock test ----------------------------------------------------------------

def _suspicious_with_probe(rs, agent, subject=1):
    set_value(rs, subject, -35)
    assert rs.knock_test(subject)
    rs.probe_transmitted(subject, True)
    return agent.probes[-1]


def test_knock_pass_resets_to_neutral():
    rs, agent = system()
    probe = _suspicious_with_probe(rs, agent)
    assert probe.deadline == pytest.approx(1.0)
    agent.engine.run_until(0.5)
    rs.knock_passed(1)
    assert rs.value(1) == 0 and rs.classification(1) is NORMAL
    agent.engine.run_until(5.0)
    assert not rs.is_malicious(1)


def test_knock_fail_declares_and_calls_agent():
    rs, agent = system()
    _suspicious_with_probe(rs, agent)
    agent.engine.run_until(1.0)
    assert rs.is_malicious(1) and rs.value(1) == -50
    assert agent.declared == [1]
    assert rs.knock_results[-1][1:] == (1, "fail")


def test_knock_without_route_is_unverifiable():
    rs, agent = system(probe_route=False)
    set_value(rs, 1, -35)
    assert not rs.knock_test(1)
    assert rs.knock_results[-1][2] == "unverifiable"
    assert not rs.is_malicious(1)


def test_undelivered_probe_is_unverifiable_and_retried():
    rs, agent = system()
    set_value(rs, 1, -35)
    rs.knock_test(1)
    rs.probe_transmitted(1, False)
    assert rs.pending_probe(1) is None and not rs.is_malicious(1)
    assert rs.knock_test(1)


def test_knock_requires_suspicious_neighbor():
    rs, agent = system(neighbors=(2,))
    set_value(rs, 1, -40)
    assert not rs.knock_test(1)
    set_value(rs, 2, -10)
    assert not rs.knock_test(2)
    assert agent.probes == []


# -- fading --------------------------------------------------------------------

def test_fading_steps_and_cap():
    rs, agent = system()
    breach(rs, 1, 10)
    assert rs.is_malicious(1)
    t0 = agent.now
    d1 = rs.fade_tick(1)
    assert d1.value == -45 and rs.is_malicious(1)
    d2 = rs.fade_tick(1)
    assert d2.value == -42.5 and rs.classification(1) is SUSPICIOUS and not rs.is_malicious(1)
    assert t0 == agent.now


def test_fading_runs_on_inactivity_only():
    rs, agent = system()
    breach(rs, 1, 10)
    declared_at = agent.now
    # a citation inside the timeout resets the inactivity clock
    agent.engine.run_until(declared_at + 15)
    rs.apply_warning(WarningMessage(2, 1, (2, 1)))
    agent.engine.run_until(declared_at + 30)
    rs.close_window(0.0)
    assert rs.value(1) == -50
    agent.engine.run_until(declared_at + 35)
    rs.close_window(0.0)
    assert rs.value(1) == -45


def test_fading_never_exceeds_cap():
    rs, agent = system()
    breach(rs, 1, 10)
    for k in range(1, 40):
        agent.engine.run_until(agent.now + 20)
        rs.close_window(0.0)
        assert rs.value(1) <= -42.5
    assert rs.value(1) == -42.5


def test_faded_node_relapse_is_redeclared_quickly():
    rs, agent = system()
    breach(rs, 1, 10)
    rs.fade_tick(1)
    rs.fade_tick(1)
    breach(rs, 1)
    assert rs.value(1) == -47.5 and rs.classification(1) is SUSPICIOUS
    assert rs.apply_warning(WarningMessage(2, 1, (2, 9))) == "knock"
    rs.probe_transmitted(1, True)
    agent.engine.run_until(agent.now + 1.0)
    assert rs.is_malicious(1)


# -- clamp invariant under random mixed evidence ----------------------------------

@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(1, 3), st.integers(0, 6)), max_size=150))
def test_values_stay_within_bounds(ops):
    rs, agent = system()
    t = 0.0
    for k, (op, subject, n) in enumerate(ops):
        if op == 0:
            for _ in range(n):
                rs.on_register(subject)
        elif op == 1:
            rs.on_pack(subject)
        elif op == 2:
            rs.close_window(n / 6)
        elif op == 3:
            rs.apply_warning(WarningMessage(9, subject, (9, k)))
        elif op == 4:
            rs.apply_avoid_citation(subject, (7, k))
        else:
            rs.probe_transmitted(subject, n % 2 == 0)
        t += n
        agent.engine.run_until(t)
        for rec in rs.records.values():
            assert -50 <= rec.value <= 0
            if rec.cls is MALICIOUS:
                assert rec.first_hand


def test_constants_enforce_ordering():
    with pytest.raises(ValueError):
        IdsConstants(suspicious_threshold=-60)
    with pytest.raises(ValueError):
        IdsConstants(w_warning=-6)
    with pytest.raises(ValueError):
        IdsConstants(positive_appraisal=5)
    assert IdsConstants().fading_cap == -42.5
