"""Dynamic Source Routing agent with the reputation overlay hooks.

One ``DsrAgent`` runs per node. Plain DSR nodes and attackers have
``ids = None``: they neither monitor nor filter, and they forward avoid
lists untouched.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator

from .adversary import AdversaryProfile, should_drop
from .ids import (SUSPICIOUS, IdsConstants, KnockProbe, ReputationSystem, WarningMessage,
                  congestion_parameter, path_priority)
from .packets import (BROADCAST, PROTO_DSR, PROTO_IDS, Kind, Packet, PacketIdentity,
                      control_size)

if TYPE_CHECKING:
    from .network import Network
    from .sim import RngStream


class InvariantViolation(AssertionError):
    """A simulation invariant failed; results would be meaningless."""


@dataclass(frozen=True)
class DsrParams:
    rreq_timeout: float = 0.5
    rreq_max_timeout: float = 10.0
    send_buffer_timeout: float = 30.0
    send_buffer_capacity: int = 50
    max_routes_per_dest: int = 8
    active_flow_timeout: float = 2.0


def pack_match(registered: tuple[PacketIdentity, int | None], overheard: Packet) -> bool:
    """Is ``overheard`` the onward retransmission of a registered packet?

    ``registered`` is the identity and the segments-left value of the frame
    we sent (``None`` when it carried no source route). Identity must match
    field-wise; if either frame has a source route, both must, and the
    overheard one must have strictly fewer segments left.
    """
    identity, seg = registered
    if overheard.identity != identity:
        return False
    if seg is None and overheard.route is None:
        return True
    if seg is None or overheard.route is None:
        return False
    return overheard.segments_left < seg


class SentRegistry:
    """Data frames sent to each neighbour that still await a passive ack."""

    def __init__(self):
        self._pending: dict[int, dict[PacketIdentity, tuple[int | None, float]]] = {}

    def add(self, neighbor: int, identity: PacketIdentity, segments_left: int | None, t: float) -> None:
        self._pending.setdefault(neighbor, {})[identity] = (segments_left, t)

    def match(self, sender: int, frame: Packet) -> bool:
        entries = self._pending.get(sender)
        if not entries:
            return False
        ident = frame.identity
        entry = entries.get(ident)
        if entry is None or not pack_match((ident, entry[0]), frame):
            return False
        del entries[ident]
        return True

    def pending(self, neighbor: int) -> int:
        return len(self._pending.get(neighbor, ()))

    def clear(self, neighbor: int | None = None) -> None:
        if neighbor is None:
            self._pending.clear()
        else:
            self._pending.pop(neighbor, None)


class RouteCache:
    """Full source routes keyed by destination, oldest first."""

    def __init__(self, owner: int, max_per_dest: int = 8):
        self.owner = owner
        self.max_per_dest = max_per_dest
        self.routes: dict[int, list[tuple[int, ...]]] = {}

    def add(self, path: tuple[int, ...]) -> bool:
        if len(path) < 2 or path[0] != self.owner:
            raise ValueError(f"route {path} does not start at {self.owner}")
        if len(set(path)) != len(path):
            raise ValueError(f"route {path} has a loop")
        lst = self.routes.setdefault(path[-1], [])
        if path in lst:
            lst.remove(path)
        lst.append(path)
        if len(lst) > self.max_per_dest:
            del lst[0]
        return True

    def candidates(self, dest: int) -> list[tuple[int, ...]]:
        return self.routes.get(dest, [])

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        for lst in self.routes.values():
            yield from lst

    def __len__(self) -> int:
        return sum(len(v) for v in self.routes.values())

    def _filter(self, keep) -> int:
        removed = 0
        for dest in list(self.routes):
            lst = self.routes[dest]
            kept = [p for p in lst if keep(p)]
            removed += len(lst) - len(kept)
            if kept:
                self.routes[dest] = kept
            else:
                del self.routes[dest]
        return removed

    def remove_link(self, a: int, b: int) -> int:
        def keep(p):
            for i in range(len(p) - 1):
                if p[i] == a and p[i + 1] == b:
                    return False
            return True
        return self._filter(keep)

    def purge_node(self, node: int) -> int:
        """Drop every route that passes through ``node``."""
        return self._filter(lambda p: node not in p[1:-1])


class DsrAgent:
    def __init__(self, node_id: int, net: "Network", params: DsrParams,
                 ids_constants: IdsConstants | None = None,
                 adversary: AdversaryProfile | None = None,
                 adversary_stream: "RngStream | None" = None,
                 reputation_trace=None):
        self.id = node_id
        self.net = net
        self.engine = net.engine
        self.params = params
        self.cache = RouteCache(node_id, params.max_routes_per_dest)
        self.registry = SentRegistry()
        self.adversary = adversary
        self.adversary_stream = adversary_stream
        self.ids = (ReputationSystem(node_id, ids_constants, self, reputation_trace)
                    if ids_constants is not None else None)
        self._ident = 0
        self._request_id = 0
        self._warning_id = 0
        self.seen_rreq: set[tuple[int, int]] = set()
        self.discovery: dict[int, tuple[int, float, object]] = {}
        self.send_buffer: dict[int, deque[Packet]] = {}
        self._buffered = 0
        # links learned from source routes: node -> {next hop: last seen}
        self.links: dict[int, dict[int, float]] = {}
        # next hop -> {flow source: (route, index of self, last use)}
        self.active: dict[int, dict[int, tuple[tuple[int, ...], int, float]]] = {}
        self.stats = {"rreq_avoided": 0, "rreq_refused": 0, "rrep_refused": 0,
                      "rerr_sent": 0, "warnings_sent": 0, "probes_sent": 0}

    # -- helpers -----------------------------------------------------------

    @property
    def now(self) -> float:
        return self.engine.now

    @property
    def queue(self):
        return self.net.queues[self.id]

    def is_neighbor(self, other: int) -> bool:
        return self.net.world.in_range(self.id, other, self.engine.now)

    def _next_ident(self) -> int:
        self._ident += 1
        return self._ident

    def _learn(self, path: tuple[int, ...]) -> None:
        now = self.engine.now
        links = self.links
        for a, b in zip(path, path[1:]):
            links.setdefault(a, {})[b] = now

    def best_route(self, dest: int) -> tuple[int, ...] | None:
        paths = self.cache.routes.get(dest)
        if not paths:
            return None
        ids = self.ids
        best = None
        best_key = None
        for i, p in enumerate(paths):
            hops = len(p) - 1
            if ids is None:
                key = (hops, -i)
            else:
                interior = p[1:-1]
                if any(ids.is_malicious(n) for n in interior):
                    continue
                tier = 1 if any(ids.classification(n) is SUSPICIOUS for n in interior) else 0
                min_rep = min((ids.value(n) for n in interior), default=0.0)
                key = (tier, -path_priority(min_rep, hops), hops, -i)
            if best_key is None or key < best_key:
                best, best_key = p, key
        return best

    # -- origination ---------------------------------------------------------

    def send_data(self, pkt: Packet) -> None:
        """Entry point for locally generated data (CBR or probes)."""
        route = self.best_route(pkt.dst)
        if route is not None:
            self._send_routed(pkt, route)
            return
        if self._buffered >= self.params.send_buffer_capacity:
            self.net.drop_data(pkt, self.id, "congestion")
            return
        self.send_buffer.setdefault(pkt.dst, deque()).append(pkt)
        self._buffered += 1
        if pkt.dst not in self.discovery:
            self._issue_rreq(pkt.dst, self.params.rreq_timeout)

    def _send_routed(self, pkt: Packet, route: tuple[int, ...]) -> bool:
        pkt.route = route
        pkt.segments_left = len(route) - 2
        pkt.next_hop = route[1]
        pkt.trail = (self.id,)
        if not pkt.probe:
            self._note_flow(route[1], pkt.src, route, 0)
        return self.net.send(self.id, pkt)

    def _note_flow(self, next_hop: int, source: int, route: tuple[int, ...], idx: int) -> None:
        self.active.setdefault(next_hop, {})[source] = (route, idx, self.engine.now)

    def originate_route_request(self, target: int) -> Packet:
        self._request_id += 1
        avoid = tuple(self.ids.malicious_list()) if self.ids is not None else ()
        pkt = Packet(Kind.RREQ, self.id, BROADCAST, self._next_ident(),
                     control_size(1 + len(avoid)), self.engine.now, protocol=PROTO_DSR,
                     request_id=self._request_id, target=target,
                     accumulated=(self.id,), avoid=avoid)
        self.seen_rreq.add((self.id, self._request_id))
        self.net.send(self.id, pkt)
        return pkt

    def _issue_rreq(self, target: int, timeout: float) -> None:
        pkt = self.originate_route_request(target)
        handle = self.engine.call_later(timeout, self._rreq_timeout, target, target=self.id)
        self.discovery[target] = (pkt.request_id, timeout, handle)

    def _expire_buffer(self, target: int) -> None:
        buf = self.send_buffer.get(target)
        if not buf:
            return
        horizon = self.engine.now - self.params.send_buffer_timeout
        while buf and buf[0].created_at <= horizon:
            self.net.drop_data(buf.popleft(), self.id, "no-route")
            self._buffered -= 1

    def _rreq_timeout(self, target: int) -> None:
        entry = self.discovery.pop(target, None)
        if entry is None:
            return
        self._expire_buffer(target)
        if not self.send_buffer.get(target):
            self.send_buffer.pop(target, None)
            return
        if self.best_route(target) is not None:
            self._flush(target)
            return
        self._issue_rreq(target, min(entry[1] * 2, self.params.rreq_max_timeout))

    def _flush(self, target: int) -> None:
        self._expire_buffer(target)
        buf = self.send_buffer.get(target)
        while buf:
            route = self.best_route(target)
            if route is None:
                return
            self._buffered -= 1
            self._send_routed(buf.popleft(), route)
        self.send_buffer.pop(target, None)
        entry = self.discovery.pop(target, None)
        if entry is not None:
            entry[2].cancel()

    def buffered_packets(self) -> Iterator[Packet]:
        for buf in self.send_buffer.values():
            yield from buf

    # -- reception -----------------------------------------------------------

    def receive(self, pkt: Packet, prev: int) -> None:
        kind = pkt.kind
        if kind is Kind.DATA:
            self.forward_data(pkt, prev)
            return
        adv = self.adversary
        if (adv is not None and kind.is_routing and adv.drops_routing
                and pkt.dst != self.id and pkt.target != self.id
                and should_drop(adv, pkt, self.adversary_stream, self.engine.now)):
            self.net.trace("drop", self.id, pkt)
            return
        if kind is Kind.RREQ:
            self.handle_route_request(pkt, prev)
        elif kind is Kind.RREP:
            self.handle_route_reply(pkt, prev)
        elif kind is Kind.RERR:
            self.handle_route_error(pkt, prev)
        elif kind is Kind.WARNING:
            if self.ids is not None:
                self.ids.apply_warning(WarningMessage(pkt.src, pkt.accused, pkt.warning_id))

    def handle_route_request(self, rreq: Packet, prev: int) -> str:
        me = self.id
        if rreq.src == me or me in rreq.accumulated:
            return "loop"
        key = (rreq.src, rreq.request_id)
        is_target = rreq.target == me
        if key in self.seen_rreq and not is_target:
            return "duplicate"
        self.seen_rreq.add(key)
        avoid = rreq.avoid
        ids = self.ids
        if ids is not None:
            if me in avoid:
                self.stats["rreq_avoided"] += 1
                return "avoided"
            if any(ids.is_malicious(n) for n in rreq.accumulated):
                self.stats["rreq_refused"] += 1
                return "refused"
            for cited in avoid:
                ids.apply_avoid_citation(cited, key)
            own = [m for m in ids.malicious_list() if m not in avoid]
            if own:
                avoid = avoid + tuple(own)
        path = rreq.accumulated + (me,)
        if is_target:
            rev = path[::-1]
            rrep = Packet(Kind.RREP, me, rreq.src, self._next_ident(), control_size(len(path)),
                          self.engine.now, protocol=PROTO_DSR, route=rev,
                          segments_left=len(rev) - 2, next_hop=rev[1],
                          request_id=rreq.request_id, target=me, accumulated=path)
            self.net.send(me, rrep)
            return "replied"
        fwd = rreq.copy(accumulated=path, avoid=avoid, size=control_size(len(path) + len(avoid)))
        self.net.send(me, fwd)
        return "forwarded"

    def _relay(self, pkt: Packet) -> None:
        nxt = pkt.route[pkt.hop_index + 1]
        self.net.send(self.id, pkt.copy(segments_left=pkt.segments_left - 1, next_hop=nxt))

    def handle_route_reply(self, rrep: Packet, prev: int) -> str:
        path = rrep.accumulated
        ids = self.ids
        if ids is not None and any(ids.is_malicious(n) for n in path[1:-1]):
            self.stats["rrep_refused"] += 1
            return "refused"
        if ids is not None:
            self._learn(path)
        if rrep.segments_left > 0:
            self._relay(rrep)
            return "relayed"
        if path[0] != self.id:
            return "misrouted"
        self.cache.add(path)
        if rrep.target in self.send_buffer:
            self._flush(rrep.target)
        return "cached"

    def handle_route_error(self, rerr: Packet, prev: int) -> str:
        if self.ids is not None and prev == rerr.src:
            self.ids.clear_activity(prev)
            self.registry.clear(prev)
        a, b = rerr.broken
        removed = self.cache.remove_link(a, b)
        if rerr.segments_left > 0:
            self._relay(rerr)
            return "relayed"
        return "purged" if removed else "ignored"

    def forward_data(self, pkt: Packet, prev: int) -> str:
        route = pkt.route
        idx = pkt.hop_index
        if idx < 0 or route[idx] != self.id:
            self.net.drop_data(pkt, self.id, "no-route")
            return "misrouted"
        if pkt.segments_left == 0:
            trail = pkt.trail + (self.id,)
            if trail != route:
                raise InvariantViolation(f"packet {pkt.identity} traversed {trail}, route {route}")
            self.net.deliver(pkt, self.id)
            return "delivered"
        nxt = route[idx + 1]
        ids = self.ids
        if ids is not None and (ids.is_malicious(prev) or ids.is_malicious(pkt.src)):
            self.net.drop_data(pkt, self.id, "avoid")
            return "refused"
        adv = self.adversary
        if adv is not None and should_drop(adv, pkt, self.adversary_stream, self.engine.now):
            self.net.drop_data(pkt, self.id, "adversarial")
            return "dropped"
        if ids is not None:
            if ids.is_malicious(nxt) and nxt != route[-1]:
                self.net.drop_data(pkt, self.id, "avoid")
                self.generate_route_error(nxt, pkt)
                return "refused"
            self._learn(route)
        if not pkt.probe:
            self._note_flow(nxt, pkt.src, route, idx)
        self.net.send(self.id, pkt.copy(segments_left=pkt.segments_left - 1, next_hop=nxt,
                                        trail=pkt.trail + (self.id,)))
        return "forwarded"

    def overhear(self, frame: Packet, sender: int) -> None:
        ids = self.ids
        if ids is None or frame.kind is not Kind.DATA:
            return
        if frame.next_hop != BROADCAST:
            self.links.setdefault(sender, {})[frame.next_hop] = self.engine.now
        if self.registry.match(sender, frame):
            ids.on_pack(sender)
            self.net.trace("pack", self.id, frame)
        elif frame.probe:
            probe = ids.pending_probe(sender)
            if probe is not None and pack_match((probe.identity, probe.segments_left), frame):
                ids.knock_passed(sender)

    # -- MAC feedback ----------------------------------------------------------

    def on_transmitted(self, frame: Packet, delivered: bool) -> None:
        if frame.kind is not Kind.DATA:
            if not delivered and frame.next_hop != BROADCAST:
                self.cache.remove_link(self.id, frame.next_hop)
            return
        ids = self.ids
        if frame.probe and frame.src == self.id:
            if ids is not None:
                ids.probe_transmitted(frame.next_hop, delivered)
            if not delivered:
                self.net.drop_data(frame, self.id, "no-route")
            return
        if delivered:
            # the final hop never retransmits, so it cannot be acknowledged
            if ids is not None and frame.segments_left > 0:
                self.registry.add(frame.next_hop, frame.identity, frame.segments_left, self.engine.now)
                ids.on_register(frame.next_hop)
            return
        self.on_link_failure(frame)

    def on_link_failure(self, frame: Packet) -> None:
        self.cache.remove_link(self.id, frame.next_hop)
        self.net.drop_data(frame, self.id, "no-route")
        # the outgoing frame is already addressed one hop further along
        self.generate_route_error(frame.next_hop, route=frame.route, idx=frame.hop_index - 1)

    def generate_route_error(self, dead_next_hop: int, pkt: Packet | None = None,
                             route: tuple[int, ...] | None = None, idx: int | None = None) -> Packet | None:
        """Purge the broken link locally and notify the flow source, if it is upstream."""
        self.cache.remove_link(self.id, dead_next_hop)
        if pkt is not None:
            route, idx = pkt.route, pkt.hop_index
        if route is None or idx is None or idx == 0:
            return None
        rev = route[idx::-1]
        rerr = Packet(Kind.RERR, self.id, rev[-1], self._next_ident(), control_size(len(rev) + 2),
                      self.engine.now, protocol=PROTO_DSR, route=rev,
                      segments_left=len(rev) - 2, next_hop=rev[1],
                      broken=(self.id, dead_next_hop))
        self.stats["rerr_sent"] += 1
        self.net.send(self.id, rerr)
        return rerr

    # -- reputation side effects -----------------------------------------------

    def on_declared_malicious(self, subject: int) -> None:
        self.cache.purge_node(subject)
        flows = self.active.pop(subject, {})
        cutoff = self.engine.now - self.params.active_flow_timeout
        for source in sorted(flows):
            route, idx, last = flows[source]
            if last >= cutoff and source != self.id:
                self.generate_route_error(subject, route=route, idx=idx)
        self.cache.remove_link(self.id, subject)
        self.broadcast_warning(subject)

    def broadcast_warning(self, accused: int) -> Packet:
        self._warning_id += 1
        w = Packet(Kind.WARNING, self.id, BROADCAST, self._next_ident(), control_size(2),
                   self.engine.now, protocol=PROTO_IDS, accused=accused,
                   warning_id=(self.id, self._warning_id))
        self.stats["warnings_sent"] += 1
        self.net.send(self.id, w)
        return w

    def knock_route(self, target: int) -> tuple[int, ...] | None:
        """Two-hop route self -> target -> Z using the freshest knowledge of a link out of target."""
        me = self.id
        for p in reversed(list(self.cache)):
            if len(p) > 2 and p[1] == target:
                return (me, target, p[2])
        onward = self.links.get(target)
        if onward:
            best = None
            for z, t in onward.items():
                if z != me and z != target and (best is None or t > best[1]):
                    best = (z, t)
            if best is not None:
                return (me, target, best[0])
        return None

    def send_probe(self, target: int) -> KnockProbe | None:
        route = self.knock_route(target)
        if route is None:
            return None
        pkt = Packet(Kind.DATA, self.id, route[-1], self._next_ident(), self.net.data_size,
                     self.engine.now, probe=True)
        if not self._send_routed(pkt, route):
            return None
        self.stats["probes_sent"] += 1
        return KnockProbe(target, route, pkt.identity, pkt.segments_left)

    def close_window(self) -> None:
        ids = self.ids
        if ids is None:
            return
        q = self.queue
        ids.close_window(congestion_parameter(q.occupancy, q.capacity))
        self.registry.clear()
