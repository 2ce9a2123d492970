"""Misbehaviour profiles attached to nodes."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .packets import Kind, Packet
from .sim import RngStream


@dataclass(frozen=True)
class AdversaryProfile:
    """Selective dropper: relayed data is discarded with ``drop_probability``.

    Routing packets pass untouched unless ``drops_routing`` is set, so the
    attacker keeps itself on discovered routes.
    """

    drop_probability: float = 0.99
    drops_routing: bool = False
    active_from: float = 0.0
    active_until: float = math.inf

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must lie in [0, 1]")
        if self.active_until < self.active_from:
            raise ValueError("active window is empty")

    def active(self, t: float) -> bool:
        return self.active_from <= t < self.active_until


BLACK_HOLE = AdversaryProfile(drop_probability=1.0)


def should_drop(profile: AdversaryProfile, pkt: Packet, stream: RngStream, now: float = 0.0) -> bool:
    if not profile.active(now):
        return False
    if pkt.kind is Kind.DATA:
        return stream.random() < profile.drop_probability
    if pkt.kind.is_routing:
        return profile.drops_routing
    return False


@dataclass(frozen=True)
class ColludingLiar:
    """Broadcasts false warnings about ``victims`` every ``interval`` seconds; drops nothing."""

    victims: tuple[int, ...]
    interval: float = 5.0

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("liar interval must be positive")
