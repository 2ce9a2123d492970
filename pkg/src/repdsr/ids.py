"""Per-node reputation engine.

Three evidence channels feed a bounded reputation value per observed node:
first-hand window observations (passive acknowledgements), one-hop warning
messages and avoid-list citations carried in route requests. Only
first-hand evidence (a breached window or a failed knock test) can classify
a node malicious; second-hand evidence stops at the suspicious threshold.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, NamedTuple

from .packets import PacketIdentity

if TYPE_CHECKING:
    from .dsr import DsrAgent
    from .sim import EventHandle


class Classification(enum.Enum):
    NORMAL = "normal"
    SUSPICIOUS = "suspicious"
    MALICIOUS = "malicious"


NORMAL = Classification.NORMAL
SUSPICIOUS = Classification.SUSPICIOUS
MALICIOUS = Classification.MALICIOUS


@dataclass(frozen=True)
class IdsConstants:
    neutral_rating: float = 0.0
    suspicious_threshold: float = -35.0
    malicious_threshold: float = -50.0
    window_size: float = 1.0
    w_self: float = -5.0
    w_warning: float = -2.0
    w_avoid: float = -1.0
    inactivity_timeout: float = 20.0
    positive_appraisal: float = 1.0
    fading_rate: float = 5.0
    max_packet_rate: float = 4.0

    def __post_init__(self):
        if not self.malicious_threshold < self.suspicious_threshold < self.neutral_rating:
            raise ValueError("thresholds must satisfy malicious < suspicious < neutral")
        if not abs(self.w_self) > abs(self.w_warning) > abs(self.w_avoid):
            raise ValueError("weights must satisfy |self| > |warning| > |avoid|")
        if not abs(self.w_self) > self.positive_appraisal >= 0:
            raise ValueError("negative decrement must outweigh the positive appraisal")
        if self.window_size <= 0 or self.inactivity_timeout <= 0:
            raise ValueError("window size and inactivity timeout must be positive")

    @property
    def fading_cap(self) -> float:
        """Middle of the suspicious band; redemption never goes higher."""
        return (self.malicious_threshold + self.suspicious_threshold) / 2


def congestion_parameter(occupancy: int, capacity: int) -> float:
    if capacity <= 0:
        raise ValueError("queue capacity must be positive")
    if not 0 <= occupancy <= capacity:
        raise ValueError(f"occupancy {occupancy} outside [0, {capacity}]")
    return occupancy / capacity


def malicious_drop_threshold(max_packet_rate: float, cp: float, window: float) -> float:
    """Allowed number of unacknowledged packets in one timing window."""
    if max_packet_rate < 0 or cp < 0 or window < 0:
        raise ValueError("threshold inputs must be non-negative")
    return max_packet_rate * cp * window


def path_priority(min_reputation: float, hops: int) -> float:
    """Inverse of |min reputation| times hop count.

    The magnitude is floored at 1 so all-clean paths (minimum 0) stay finite
    and rank purely by length.
    """
    if hops < 1:
        raise ValueError("a path has at least one hop")
    return 1.0 / (max(abs(min_reputation), 1.0) * hops)


@dataclass
class KnockProbe:
    target: int
    route: tuple[int, ...]
    identity: PacketIdentity
    segments_left: int
    deadline: float | None = None
    handle: "EventHandle | None" = None


@dataclass
class ReputationRecord:
    subject: int
    value: float = 0.0
    cls: Classification = NORMAL
    last_cited_at: float = 0.0
    knock_pending: KnockProbe | None = None
    first_hand: bool = False


@dataclass
class WindowLog:
    index: int = 0
    registered: dict[int, int] = field(default_factory=dict)
    packed: dict[int, int] = field(default_factory=dict)

    def missing(self, neighbor: int) -> int:
        return self.registered.get(neighbor, 0) - self.packed.get(neighbor, 0)

    def clear(self, neighbor: int) -> None:
        self.registered.pop(neighbor, None)
        self.packed.pop(neighbor, None)

    def reset(self) -> None:
        self.registered.clear()
        self.packed.clear()
        self.index += 1


@dataclass(frozen=True)
class WarningMessage:
    accuser: int
    accused: int
    warning_id: tuple[int, int]


class ReputationDelta(NamedTuple):
    time: float
    observer: int
    subject: int
    channel: str
    delta: float
    value: float
    cls: Classification


class ReputationSystem:
    """Reputation state owned by one node.

    ``agent`` is the node's routing agent; it supplies the clock, neighbour
    knowledge, the queue state and the ability to emit warnings and probes.
    """

    def __init__(self, owner: int, constants: IdsConstants, agent: "DsrAgent",
                 trace: Callable[[ReputationDelta], None] | None = None):
        self.owner = owner
        self.c = constants
        self.agent = agent
        self.trace = trace
        self.records: dict[int, ReputationRecord] = {}
        self.log = WindowLog()
        self._malicious: dict[int, None] = {}
        self._seen_warnings: set[tuple[int, int]] = set()
        self._citations: set[tuple] = set()
        self.declared: list[tuple[float, int, str]] = []
        self.knock_results: list[tuple[float, int, str]] = []

    # -- state access -----------------------------------------------------

    def record(self, subject: int) -> ReputationRecord:
        rec = self.records.get(subject)
        if rec is None:
            rec = self.records[subject] = ReputationRecord(subject, self.c.neutral_rating)
        return rec

    def value(self, subject: int) -> float:
        rec = self.records.get(subject)
        return rec.value if rec else self.c.neutral_rating

    def classification(self, subject: int) -> Classification:
        rec = self.records.get(subject)
        return rec.cls if rec else NORMAL

    def is_malicious(self, subject: int) -> bool:
        return subject in self._malicious

    def malicious_list(self) -> list[int]:
        """Malicious-class subjects in declaration order; this is the avoid list."""
        return list(self._malicious)

    def _set(self, rec: ReputationRecord, value: float, channel: str) -> ReputationDelta | None:
        c = self.c
        value = min(c.neutral_rating, max(c.malicious_threshold, value))
        delta = value - rec.value
        rec.value = value
        if rec.cls is not MALICIOUS:
            rec.cls = SUSPICIOUS if value <= c.suspicious_threshold else NORMAL
        d = ReputationDelta(self.agent.now, self.owner, rec.subject, channel, delta, value, rec.cls)
        if self.trace is not None and (delta != 0 or channel in ("knock", "declare")):
            self.trace(d)
        return d

    # -- monitor ----------------------------------------------------------

    def on_register(self, neighbor: int) -> None:
        reg = self.log.registered
        reg[neighbor] = reg.get(neighbor, 0) + 1

    def on_pack(self, neighbor: int) -> None:
        packed = self.log.packed
        packed[neighbor] = packed.get(neighbor, 0) + 1

    def clear_activity(self, neighbor: int) -> None:
        self.log.clear(neighbor)

    def close_window(self, cp: float) -> list[ReputationDelta]:
        """Tally the window, update reputations, then run the fading clock."""
        c = self.c
        threshold = malicious_drop_threshold(c.max_packet_rate, cp, c.window_size)
        deltas = []
        for nb in sorted(self.log.registered):
            if self.log.registered[nb] <= 0:
                continue
            rec = self.record(nb)
            if rec.cls is MALICIOUS:
                continue
            if self.log.missing(nb) > threshold:
                d = self._set(rec, rec.value + c.w_self, "self")
                rec.first_hand = True
                deltas.append(d)
                if rec.value <= c.malicious_threshold:
                    self.declare_malicious(nb, "self")
            else:
                deltas.append(self._set(rec, rec.value + c.positive_appraisal, "self"))
        self.log.reset()
        now = self.agent.now
        for subject in list(self._malicious):
            rec = self.records[subject]
            if now - rec.last_cited_at >= c.inactivity_timeout:
                deltas.append(self.fade_tick(subject))
        return deltas

    # -- second-hand channels ---------------------------------------------

    def _second_hand(self, subject: int, weight: float, channel: str) -> str:
        c = self.c
        rec = self.record(subject)
        rec.last_cited_at = self.agent.now
        if rec.cls is MALICIOUS:
            return "noted"
        if rec.value > c.suspicious_threshold:
            self._set(rec, max(rec.value + weight, c.suspicious_threshold), channel)
            return "decremented"
        if self.agent.is_neighbor(subject):
            return "knock" if self.knock_test(subject) else "unverifiable"
        return "held"

    def apply_warning(self, w: WarningMessage) -> str:
        if w.warning_id in self._seen_warnings:
            return "duplicate"
        self._seen_warnings.add(w.warning_id)
        if w.accused == self.owner:
            return "self"
        if not self.agent.is_neighbor(w.accused):
            return "ignored"
        return self._second_hand(w.accused, self.c.w_warning, "warning")

    def apply_avoid_citation(self, cited: int, rreq_key: tuple, citing_path: tuple = ()) -> str:
        if cited == self.owner:
            return "self"
        key = (rreq_key, cited, citing_path)
        if key in self._citations:
            return "duplicate"
        self._citations.add(key)
        return self._second_hand(cited, self.c.w_avoid, "avoid")

    # -- knock test -------------------------------------------------------

    def knock_test(self, target: int) -> bool:
        """Launch a probe through ``target``; False when none could be sent."""
        rec = self.record(target)
        if rec.cls is not SUSPICIOUS or rec.knock_pending is not None:
            return False
        if not self.agent.is_neighbor(target):
            return False
        probe = self.agent.send_probe(target)
        if probe is None:
            self.knock_results.append((self.agent.now, target, "unverifiable"))
            return False
        rec.knock_pending = probe
        return True

    def probe_transmitted(self, target: int, delivered: bool) -> None:
        rec = self.records.get(target)
        if rec is None or rec.knock_pending is None:
            return
        if not delivered:
            rec.knock_pending = None
            self.knock_results.append((self.agent.now, target, "unverifiable"))
            return
        probe = rec.knock_pending
        probe.deadline = self.agent.now + self.c.window_size
        probe.handle = self.agent.engine.schedule(probe.deadline, self._knock_deadline, target)

    def pending_probe(self, target: int) -> KnockProbe | None:
        rec = self.records.get(target)
        return rec.knock_pending if rec else None

    def knock_passed(self, target: int) -> None:
        rec = self.records[target]
        probe = rec.knock_pending
        if probe is None or probe.deadline is None:
            return
        if probe.handle is not None:
            probe.handle.cancel()
        rec.knock_pending = None
        self.knock_results.append((self.agent.now, target, "pass"))
        self._set(rec, self.c.neutral_rating, "knock")

    def _knock_deadline(self, target: int) -> None:
        rec = self.records[target]
        if rec.knock_pending is None:
            return
        rec.knock_pending = None
        self.knock_results.append((self.agent.now, target, "fail"))
        rec.first_hand = True
        self.declare_malicious(target, "knock")

    # -- declaration and redemption ---------------------------------------

    def declare_malicious(self, subject: int, evidence: str) -> None:
        rec = self.record(subject)
        if not rec.first_hand:
            raise AssertionError(f"node {self.owner} declared {subject} without first-hand evidence")
        if rec.cls is MALICIOUS:
            return
        if rec.knock_pending is not None:
            if rec.knock_pending.handle is not None:
                rec.knock_pending.handle.cancel()
            rec.knock_pending = None
        rec.cls = MALICIOUS
        rec.last_cited_at = self.agent.now
        self._set(rec, self.c.malicious_threshold, "declare")
        self._malicious[subject] = None
        self.declared.append((self.agent.now, subject, evidence))
        self.agent.on_declared_malicious(subject)

    def fade_tick(self, subject: int) -> ReputationDelta:
        c = self.c
        rec = self.records[subject]
        rec.last_cited_at = self.agent.now
        cap = c.fading_cap
        new = min(rec.value + c.fading_rate, cap)
        if new >= cap:
            rec.cls = SUSPICIOUS
            del self._malicious[subject]
        return self._set(rec, new, "fade")
