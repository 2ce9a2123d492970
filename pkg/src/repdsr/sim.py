"""Discrete-event engine: virtual clock, ordered event queue and seeded RNG streams."""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


@dataclass(eq=False)
class Event:
    fire_at: float
    seq: int
    action: Callable[..., Any]
    args: tuple = ()
    target: int | None = None
    cancelled: bool = False

    @property
    def label(self) -> str:
        return getattr(self.action, "__name__", repr(self.action))


class EventHandle:
    __slots__ = ("_event",)

    def __init__(self, event: Event):
        self._event = event

    @property
    def fire_at(self) -> float:
        return self._event.fire_at

    @property
    def seq(self) -> int:
        return self._event.seq

    @property
    def cancelled(self) -> bool:
        return self._event.cancelled

    def cancel(self) -> None:
        self._event.cancelled = True


class Engine:
    """Single-threaded event loop.

    Events are ordered by ``(fire_at, seq)`` where ``seq`` is issued at
    scheduling time, so runs replay identically for identical inputs.
    """

    def __init__(self, record: bool = False):
        self.now = 0.0
        self._heap: list[tuple[float, int, Event]] = []
        self._seq = itertools.count()
        self.dispatched = 0
        self.log: list[tuple[float, int, Any, str]] | None = [] if record else None

    def schedule(self, fire_at: float, action: Callable[..., Any], *args: Any,
                 target: int | None = None) -> EventHandle:
        if fire_at < self.now:
            raise SchedulingError(f"cannot schedule at t={fire_at!r}, clock is {self.now!r}")
        ev = Event(fire_at, next(self._seq), action, args, target)
        heapq.heappush(self._heap, (fire_at, ev.seq, ev))
        return EventHandle(ev)

    def call_later(self, delay: float, action: Callable[..., Any], *args: Any,
                   target: int | None = None) -> EventHandle:
        return self.schedule(self.now + delay, action, *args, target=target)

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    def run_until(self, end: float) -> int:
        """Dispatch every event with ``fire_at <= end``; leaves the clock at ``end``."""
        heap = self._heap
        log = self.log
        count = 0
        while heap and heap[0][0] <= end:
            fire_at, seq, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now = fire_at
            if log is not None:
                log.append((fire_at, seq, ev.target, ev.label))
            ev.action(*ev.args)
            count += 1
        if end > self.now:
            self.now = end
        self.dispatched += count
        return count


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    digest = hashlib.sha256(":".join(repr(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass
class RngStream:
    """Named pseudo-random stream; ``(seed, name, draw index)`` fixes every value."""

    seed: int
    name: str
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = random.Random(derive_seed(self.seed, self.name))

    def random(self) -> float:
        return self._rng.random()

    def uniform(self, lo: float, hi: float) -> float:
        return draw_uniform(self, lo, hi)

    def shuffle(self, items: list) -> None:
        self._rng.shuffle(items)

    def choice(self, items):
        return self._rng.choice(items)


def draw_uniform(stream: RngStream, lo: float, hi: float) -> float:
    """Uniform draw on ``[lo, hi)``; ``lo == hi`` returns ``lo``."""
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi})")
    if lo == hi:
        return lo
    v = lo + (hi - lo) * stream.random()
    return v if v < hi else lo


class RngStreams:
    """Lazily created streams, one per concern, all derived from one seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, RngStream] = {}

    def get(self, name: str) -> RngStream:
        s = self._streams.get(name)
        if s is None:
            s = self._streams[name] = RngStream(self.seed, name)
        return s

    __getitem__ = get
