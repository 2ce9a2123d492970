"""Packet model shared by the radio, DSR and IDS layers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import NamedTuple

BROADCAST = -1

PROTO_UDP = 17
PROTO_DSR = 48
PROTO_IDS = 253

# Fixed header budget for control frames; each listed address adds 4 bytes.
CONTROL_BASE_BYTES = 32
ADDR_BYTES = 4


class Kind(enum.Enum):
    DATA = "data"
    RREQ = "rreq"
    RREP = "rrep"
    RERR = "rerr"
    WARNING = "warning"

    @property
    def is_routing(self) -> bool:
        return self in (Kind.RREQ, Kind.RREP, Kind.RERR)


class PacketIdentity(NamedTuple):
    """The IP header fields used to recognise a retransmission."""

    src: int
    dst: int
    protocol: int
    identification: int
    fragment_offset: int = 0


@dataclass(slots=True, eq=False)
class Packet:
    kind: Kind
    src: int
    dst: int
    ident: int
    size: int
    created_at: float = 0.0
    protocol: int = PROTO_UDP
    fragment_offset: int = 0
    # source route header; ``None`` means the frame carries none
    route: tuple[int, ...] | None = None
    segments_left: int = 0
    next_hop: int = BROADCAST
    flow: int | None = None
    probe: bool = False
    # hops actually traversed so far, for source-route integrity checks
    trail: tuple[int, ...] = ()
    # RREQ / RREP
    request_id: int = 0
    target: int = BROADCAST
    accumulated: tuple[int, ...] = ()
    avoid: tuple[int, ...] = ()
    # RERR
    broken: tuple[int, int] | None = None
    # WARNING
    accused: int = BROADCAST
    warning_id: tuple[int, int] | None = None

    @property
    def identity(self) -> PacketIdentity:
        return PacketIdentity(self.src, self.dst, self.protocol, self.ident, self.fragment_offset)

    @property
    def has_source_route(self) -> bool:
        return self.route is not None

    @property
    def bits(self) -> int:
        return self.size * 8

    @property
    def hop_index(self) -> int:
        """Index in ``route`` of the node this frame is addressed to."""
        return len(self.route) - 1 - self.segments_left

    def copy(self, **changes) -> "Packet":
        return replace(self, **changes)


def control_size(n_addresses: int) -> int:
    return CONTROL_BASE_BYTES + ADDR_BYTES * n_addresses
