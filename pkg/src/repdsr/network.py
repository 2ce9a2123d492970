"""Wires the engine, radio world, DSR agents and metrics into one simulation run."""

from __future__ import annotations

import logging
from typing import TextIO

from .adversary import AdversaryProfile, ColludingLiar
from .config import ScenarioConfig, build_mobility, resolve
from .dsr import DsrAgent, InvariantViolation
from .ids import MALICIOUS, ReputationDelta
from .packets import Kind, Packet
from .sim import Engine, RngStreams
from .traffic import (CbrFlow, MetricsAccumulator, RunResult, average_latency, ids_overhead,
                      packet_delivery_ratio, routing_overhead)
from .world import InterfaceQueue, RadioParams, World

log = logging.getLogger(__name__)


class Network:
    """One isolated, deterministic simulation run.

    The MAC is idealised: each node transmits one frame at a time from its
    drop-tail interface queue, a frame occupies ``size / bandwidth`` seconds,
    and every in-range node hears it (no collisions or backoff).
    """

    def __init__(self, config: ScenarioConfig, packet_trace: TextIO | None = None,
                 reputation_trace: TextIO | None = None, record_events: bool = False):
        cfg = config.validate()
        self.cfg = cfg
        self.streams = RngStreams(cfg.seed)
        self.engine = Engine(record=record_events)
        scenario = resolve(cfg, self.streams)
        self.flows: list[CbrFlow] = scenario.flows
        self.attackers = set(scenario.attackers)
        self.liars: dict[int, ColludingLiar] = scenario.liars
        radio = RadioParams(cfg.radio.range, cfg.radio.bandwidth, cfg.radio.processing_delay)
        self.world = World(build_mobility(cfg, self.streams, scenario.starts), radio,
                           cfg.field.width, cfg.field.height)
        self.queues = [InterfaceQueue(cfg.queue_capacity) for _ in range(cfg.nodes)]
        self.busy = [False] * cfg.nodes
        self.in_tx: list[Packet | None] = [None] * cfg.nodes
        self.metrics = MetricsAccumulator()
        self.data_size = cfg.traffic.packet_size
        self._ptrace = packet_trace
        self._rtrace = reputation_trace
        self.declarations: list[tuple[float, int, int]] = []

        profile = AdversaryProfile(cfg.adversary.drop_probability, cfg.adversary.drops_routing,
                                   cfg.adversary.active_from,
                                   float("inf") if cfg.adversary.active_until is None
                                   else cfg.adversary.active_until)
        constants = cfg.ids.constants()
        params = cfg.dsr_params()
        rep_sink = self._trace_reputation if reputation_trace is not None else None
        self.agents: list[DsrAgent] = []
        for i in range(cfg.nodes):
            hostile = i in self.attackers
            monitored = cfg.ids.enabled and not hostile and i not in self.liars
            self.agents.append(DsrAgent(
                i, self, params,
                ids_constants=constants if monitored else None,
                adversary=profile if hostile else None,
                adversary_stream=self.streams.get(f"adversary/{i}") if hostile else None,
                reputation_trace=rep_sink))
        self._ran = False

    # -- tracing -------------------------------------------------------------

    def trace(self, event: str, node: int, pkt: Packet) -> None:
        if self._ptrace is None:
            return
        i = pkt.identity
        self._ptrace.write(f"{self.engine.now:.6f} {node} {event} {pkt.kind.value} "
                           f"{i.src} {i.dst} {i.protocol} {i.identification} {i.fragment_offset}\n")

    def _trace_reputation(self, d: ReputationDelta) -> None:
        self._rtrace.write(f"{d.time:.6f} {d.observer} {d.subject} {d.channel} "
                           f"{d.delta:+.4f} {d.value:.4f} {d.cls.value}\n")

    # -- MAC -----------------------------------------------------------------

    def send(self, node: int, frame: Packet) -> bool:
        """Hand a frame to ``node``'s interface queue; False on drop-tail."""
        if not self.queues[node].enqueue(frame):
            if frame.kind is Kind.DATA:
                self.drop_data(frame, node, "congestion")
            else:
                self.trace("drop", node, frame)
            return False
        if not self.busy[node]:
            self._kick(node)
        return True

    def _kick(self, node: int) -> None:
        q = self.queues[node]
        if self.busy[node] or not len(q):
            return
        frame = q.dequeue()
        report = self.world.transmit(node, frame, self.engine.now)
        kind = frame.kind
        if kind.is_routing:
            self.metrics.control[kind.value] += 1
        elif kind is Kind.WARNING:
            self.metrics.ids_packets["warning"] += 1
        elif frame.probe:
            self.metrics.ids_packets["probe"] += 1
        if self._ptrace is not None:
            self.trace("send", node, frame)
        self.busy[node] = True
        self.in_tx[node] = frame
        self.engine.schedule(report.arrive_at, self._complete, node, frame, report, target=node)

    def _complete(self, node: int, frame: Packet, report) -> None:
        self.busy[node] = False
        self.in_tx[node] = None
        agents = self.agents
        agents[node].on_transmitted(frame, report.delivered)
        addressed = report.addressed
        tracing = self._ptrace is not None
        for r in report.receivers:
            if addressed is None or r == addressed:
                if tracing:
                    self.trace("recv", r, frame)
                agents[r].receive(frame, node)
            else:
                agents[r].overhear(frame, node)
        self._kick(node)

    # -- data accounting -------------------------------------------------------

    def drop_data(self, pkt: Packet, node: int, cause: str) -> None:
        if pkt.probe:
            self.metrics.probe_drops += 1
        else:
            self.metrics.drops[cause] += 1
        if self._ptrace is not None:
            self.trace("drop", node, pkt)

    def deliver(self, pkt: Packet, node: int) -> None:
        if pkt.probe:
            return
        m = self.metrics
        m.data_received += 1
        m.delivered_bytes += pkt.size
        m.latencies.append(self.engine.now - pkt.created_at)

    # -- periodic activities -----------------------------------------------------

    def _cbr(self, idx: int, k: int) -> None:
        flow = self.flows[idx]
        agent = self.agents[flow.source]
        pkt = Packet(Kind.DATA, flow.source, flow.sink, agent._next_ident(), flow.packet_size,
                     self.engine.now, flow=idx)
        self.metrics.data_sent += 1
        agent.send_data(pkt)
        t = flow.send_time(k + 1)
        if t < flow.stop and t <= self.cfg.horizon:
            self.engine.schedule(t, self._cbr, idx, k + 1, target=flow.source)

    def _window_close(self, k: int) -> None:
        for agent in self.agents:
            agent.close_window()
        t = (k + 1) * self.cfg.ids.window_size
        if t <= self.cfg.horizon:
            self.engine.schedule(t, self._window_close, k + 1)

    def _lie(self, liar: int, k: int) -> None:
        agent = self.agents[liar]
        for victim in self.liars[liar].victims:
            if victim != liar:
                agent.broadcast_warning(victim)
        t = (k + 1) * self.liars[liar].interval
        if t <= self.cfg.horizon:
            self.engine.schedule(t, self._lie, liar, k + 1, target=liar)

    # -- run -------------------------------------------------------------------

    def start(self) -> None:
        for idx, flow in enumerate(self.flows):
            if flow.start < flow.stop and flow.start <= self.cfg.horizon:
                self.engine.schedule(flow.start, self._cbr, idx, 0, target=flow.source)
        if self.cfg.ids.enabled and self.cfg.ids.window_size <= self.cfg.horizon:
            self.engine.schedule(self.cfg.ids.window_size, self._window_close, 1)
        for liar, prof in sorted(self.liars.items()):
            if prof.interval <= self.cfg.horizon:
                self.engine.schedule(prof.interval, self._lie, liar, 1, target=liar)

    def run(self) -> RunResult:
        if self._ran:
            raise RuntimeError("a Network runs once")
        self._ran = True
        self.start()
        self.engine.run_until(self.cfg.horizon)
        self.declarations = sorted(
            (t, a.id, s) for a in self.agents if a.ids is not None for t, s, _ in a.ids.declared)
        self.check_invariants()
        return self.result()

    def in_flight(self) -> int:
        n = 0
        for q in self.queues:
            n += sum(1 for p in q if p.kind is Kind.DATA and not p.probe)
        n += sum(1 for p in self.in_tx if p is not None and p.kind is Kind.DATA and not p.probe)
        for a in self.agents:
            n += sum(1 for p in a.buffered_packets() if not p.probe)
        return n

    def check_invariants(self) -> None:
        m = self.metrics
        accounted = m.data_received + sum(m.drops.values()) + self.in_flight()
        if accounted != m.data_sent:
            raise InvariantViolation(f"conservation: sent {m.data_sent}, accounted {accounted}")
        for q in self.queues:
            if q.enqueued - q.dequeued != q.occupancy:
                raise InvariantViolation("interface queue conservation broken")
        for a in self.agents:
            if a.ids is None:
                continue
            c = a.ids.c
            for rec in a.ids.records.values():
                if not c.malicious_threshold <= rec.value <= c.neutral_rating:
                    raise InvariantViolation(f"reputation {rec.value} out of bounds at node {a.id}")
                if rec.cls is MALICIOUS and not rec.first_hand:
                    raise InvariantViolation("malicious classification without first-hand evidence")
            for path in a.cache:
                if any(a.ids.is_malicious(n) for n in path[1:-1]):
                    raise InvariantViolation(f"node {a.id} caches {path} through a malicious node")

    def honest_nodes(self) -> set[int]:
        return set(range(self.cfg.nodes)) - self.attackers - set(self.liars)

    def result(self) -> RunResult:
        cfg = self.cfg
        m = self.metrics
        honest = self.honest_nodes()
        accused = {s for _, _, s in self.declarations}
        return RunResult(
            scenario_id=cfg.scenario_id, seed=cfg.seed, nodes=cfg.nodes,
            malicious_fraction=cfg.adversary.fraction, pause_time=cfg.mobility.pause_time,
            window_size=cfg.ids.window_size, ids="on" if cfg.ids.enabled else "off",
            pdr=packet_delivery_ratio(m), routing_overhead=routing_overhead(m),
            ids_overhead=ids_overhead(m), avg_latency_s=average_latency(m),
            throughput_bps=(m.delivered_bytes * 8 / cfg.horizon / cfg.nodes) if cfg.horizon else 0.0,
            data_sent=m.data_sent, data_received=m.data_received,
            control_packets=m.control_packets, ids_packets=m.ids_overhead_packets,
            drop_adversarial=m.drops["adversarial"], drop_congestion=m.drops["congestion"],
            drop_no_route=m.drops["no-route"], drop_avoid=m.drops["avoid"],
            in_flight=self.in_flight(), declarations=len(self.declarations),
            false_accusations=sum(1 for _, _, s in self.declarations if s in honest),
            honest_nodes=len(honest), honest_accused=len(accused & honest))


def run_scenario(config: ScenarioConfig, **kwargs) -> RunResult:
    return Network(config, **kwargs).run()
