"""Physical layer: random waypoint mobility, unit-disk radio and the interface queue."""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .packets import BROADCAST, Packet
from .sim import RngStream, draw_uniform


class Position(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class RadioParams:
    range: float = 250.0
    bandwidth: float = 2e6
    per_hop_processing_delay: float = 0.0

    def __post_init__(self):
        if self.range <= 0 or self.bandwidth <= 0:
            raise ValueError("radio range and bandwidth must be positive")


@dataclass(frozen=True)
class WaypointState:
    origin: Position
    destination: Position
    speed: float
    depart_at: float
    arrive_at: float
    pause_until: float


class Segment(NamedTuple):
    t0: float
    t1: float
    x0: float
    y0: float
    x1: float
    y1: float


def _leg(t0: float, x0: float, y0: float, x1: float, y1: float, speed: float) -> Segment:
    dist = math.hypot(x1 - x0, y1 - y0)
    return Segment(t0, t0 + dist / speed if dist > 0 else t0, x0, y0, x1, y1)


class _Trajectory:
    """Piecewise-linear path stored as contiguous segments."""

    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.segments: list[Segment] = []
        self._starts: list[float] = []
        self._cursor = 0

    def _append(self, seg: Segment) -> None:
        self.segments.append(seg)
        self._starts.append(seg.t0)

    def _extend(self, t: float) -> None:
        pass

    def position_at(self, t: float) -> Position:
        self._extend(t)
        segs = self.segments
        i = self._cursor
        s = segs[i]
        # fast path: monotone queries from the event loop stay on one segment
        if not s.t0 <= t < s.t1:
            i = self._cursor = max(bisect_right(self._starts, t) - 1, 0)
            s = segs[i]
        if t >= s.t1 or s.t1 == s.t0:
            return Position(s.x1, s.y1)
        if t <= s.t0:
            return Position(s.x0, s.y0)
        f = (t - s.t0) / (s.t1 - s.t0)
        x = min(max(s.x0 + (s.x1 - s.x0) * f, 0.0), self.width)
        y = min(max(s.y0 + (s.y1 - s.y0) * f, 0.0), self.height)
        return Position(x, y)


class RandomWaypoint(_Trajectory):
    """Random waypoint with an initial pause, as produced by setdest.

    Each leg picks a uniform destination in the field and a speed in
    ``(min_speed, max_speed]``; zero is excluded so every leg terminates.
    """

    def __init__(self, start: Position, width: float, height: float, max_speed: float,
                 pause_time: float, stream: RngStream, min_speed: float = 0.0):
        super().__init__(width, height)
        if not 0 <= min_speed < max_speed:
            raise ValueError("need 0 <= min_speed < max_speed")
        self.max_speed = max_speed
        self.min_speed = min_speed
        self.pause_time = pause_time
        self.stream = stream
        self.legs: list[WaypointState] = []
        self._append(Segment(0.0, pause_time, start.x, start.y, start.x, start.y))

    def next_waypoint(self) -> WaypointState:
        last = self.segments[-1]
        depart = last.t1
        dest = Position(draw_uniform(self.stream, 0.0, self.width),
                        draw_uniform(self.stream, 0.0, self.height))
        speed = self.max_speed - draw_uniform(self.stream, 0.0, self.max_speed - self.min_speed)
        seg = _leg(depart, last.x1, last.y1, dest.x, dest.y, speed)
        self._append(seg)
        if self.pause_time > 0:
            self._append(Segment(seg.t1, seg.t1 + self.pause_time, dest.x, dest.y, dest.x, dest.y))
        state = WaypointState(Position(last.x1, last.y1), dest, speed, depart, seg.t1,
                              seg.t1 + self.pause_time)
        self.legs.append(state)
        return state

    def _extend(self, t: float) -> None:
        while self.segments[-1].t1 <= t:
            self.next_waypoint()

    def trace_records(self, node: int, horizon: float) -> list[tuple[int, float, float, float, float]]:
        self._extend(horizon)
        first = self.segments[0]
        records = [(node, 0.0, first.x0, first.y0, 0.0)]
        for leg in self.legs:
            if leg.depart_at >= horizon:
                break
            records.append((node, leg.depart_at, leg.destination.x, leg.destination.y, leg.speed))
        return records


class TraceMobility(_Trajectory):
    """Replays setdest-style records ``(time, x, y, speed)``; speed 0 places the node."""

    def __init__(self, records: Iterable[tuple[float, float, float, float]],
                 width: float, height: float):
        super().__init__(width, height)
        recs = sorted(records, key=lambda r: r[0])
        if not recs or recs[0][3] != 0.0:
            raise ValueError("trace must start with a placement record (speed 0)")
        _, x, y, _ = recs[0]
        self._append(Segment(0.0, 0.0, x, y, x, y))
        for t, x1, y1, speed in recs[1:]:
            if speed <= 0:
                raise ValueError("movement record needs a positive speed")
            if not (0 <= x1 <= width and 0 <= y1 <= height):
                raise ValueError(f"waypoint ({x1}, {y1}) outside the field")
            last = self.segments[-1]
            if t < last.t1:
                # redirected mid-leg: truncate the current leg at t
                p = self.position_at(t)
                self.segments[-1] = Segment(last.t0, t, last.x0, last.y0, p.x, p.y)
            elif t > last.t1:
                self._append(Segment(last.t1, t, last.x1, last.y1, last.x1, last.y1))
            last = self.segments[-1]
            self._append(_leg(t, last.x1, last.y1, x1, y1, speed))
        self._cursor = 0


def write_trace(path, records: Iterable[tuple[int, float, float, float, float]]) -> None:
    with open(path, "w") as fh:
        fh.write("# node time x y speed\n")
        for node, t, x, y, v in records:
            fh.write(f"{node} {t!r} {x!r} {y!r} {v!r}\n")


def read_trace(path) -> dict[int, list[tuple[float, float, float, float]]]:
    out: dict[int, list[tuple[float, float, float, float]]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            node = int(parts[0])
            t, x, y, v = (float(p) for p in parts[1:])
            out.setdefault(node, []).append((t, x, y, v))
    return out


class InterfaceQueue:
    """Drop-tail FIFO between the routing layer and the MAC."""

    __slots__ = ("capacity", "_items", "enqueued", "dequeued", "dropped")

    def __init__(self, capacity: int = 50):
        if capacity <= 0:
            raise ValueError("queue capacity must be positive")
        self.capacity = capacity
        self._items: deque[Packet] = deque()
        self.enqueued = 0
        self.dequeued = 0
        self.dropped = 0

    @property
    def occupancy(self) -> int:
        return len(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def enqueue(self, pkt: Packet) -> bool:
        if len(self._items) >= self.capacity:
            self.dropped += 1
            return False
        self._items.append(pkt)
        self.enqueued += 1
        return True

    def dequeue(self) -> Packet:
        pkt = self._items.popleft()
        self.dequeued += 1
        return pkt


class UnknownNode(KeyError):
    pass


@dataclass
class DeliveryReport:
    sender: int
    arrive_at: float
    receivers: list[int]
    addressed: int | None
    delivered: bool


@dataclass
class World:
    mobility: list[_Trajectory]
    radio: RadioParams = field(default_factory=RadioParams)
    width: float = 1000.0
    height: float = 1000.0

    def __post_init__(self):
        self._cache_t: float | None = None
        self._cache: list[Position] = []
        self._r2 = self.radio.range * self.radio.range

    @property
    def n(self) -> int:
        return len(self.mobility)

    def position_at(self, node: int, t: float) -> Position:
        if not 0 <= node < len(self.mobility):
            raise UnknownNode(node)
        return self.mobility[node].position_at(t)

    def positions_at(self, t: float) -> list[Position]:
        if t != self._cache_t:
            self._cache = [m.position_at(t) for m in self.mobility]
            self._cache_t = t
        return self._cache

    def neighbors_of(self, node: int, t: float) -> set[int]:
        if not 0 <= node < len(self.mobility):
            raise UnknownNode(node)
        return set(self._neighbors(node, t))

    def _neighbors(self, node: int, t: float) -> list[int]:
        pos = self.positions_at(t)
        x, y = pos[node]
        r2 = self._r2
        out = []
        for j, (xj, yj) in enumerate(pos):
            if j != node:
                dx = xj - x
                dy = yj - y
                if dx * dx + dy * dy <= r2:
                    out.append(j)
        return out

    def in_range(self, a: int, b: int, t: float) -> bool:
        pos = self.positions_at(t)
        dx = pos[a].x - pos[b].x
        dy = pos[a].y - pos[b].y
        return dx * dx + dy * dy <= self._r2

    def tx_delay(self, frame: Packet) -> float:
        return frame.bits / self.radio.bandwidth + self.radio.per_hop_processing_delay

    def transmit(self, sender: int, frame: Packet, t: float) -> DeliveryReport:
        """Promiscuous delivery: every neighbour hears the frame, the addressee receives it."""
        receivers = self._neighbors(sender, t)
        arrive = t + self.tx_delay(frame)
        if frame.next_hop == BROADCAST:
            return DeliveryReport(sender, arrive, receivers, None, True)
        return DeliveryReport(sender, arrive, receivers, frame.next_hop, frame.next_hop in receivers)
