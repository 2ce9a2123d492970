"""CBR traffic and run-level metrics."""

from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

DROP_CAUSES = ("adversarial", "congestion", "no-route", "avoid")


@dataclass(frozen=True)
class CbrFlow:
    source: int
    sink: int
    start: float
    stop: float
    packet_size: int = 64
    rate: float = 4.0

    def __post_init__(self):
        if self.source == self.sink:
            raise ValueError("flow source and sink must differ")
        if self.rate <= 0 or self.packet_size <= 0:
            raise ValueError("rate and packet size must be positive")
        if self.stop < self.start:
            raise ValueError("flow stops before it starts")

    @property
    def gap(self) -> float:
        return 1.0 / self.rate

    def send_time(self, k: int) -> float:
        return self.start + k * self.gap


def generate_flow_events(flow: CbrFlow) -> list[float]:
    """Send instants ``start + k/rate`` strictly before ``stop``."""
    out = []
    k = 0
    while True:
        t = flow.send_time(k)
        if t >= flow.stop:
            return out
        out.append(t)
        k += 1


@dataclass
class MetricsAccumulator:
    data_sent: int = 0
    data_received: int = 0
    delivered_bytes: int = 0
    control: Counter = field(default_factory=Counter)
    ids_packets: Counter = field(default_factory=Counter)
    latencies: list[float] = field(default_factory=list)
    drops: Counter = field(default_factory=lambda: Counter({c: 0 for c in DROP_CAUSES}))
    probe_drops: int = 0

    @property
    def control_packets(self) -> int:
        return sum(self.control.values())

    @property
    def ids_overhead_packets(self) -> int:
        return sum(self.ids_packets.values())


def packet_delivery_ratio(acc: MetricsAccumulator) -> float | None:
    if acc.data_sent == 0:
        return None
    return acc.data_received / acc.data_sent


def routing_overhead(acc: MetricsAccumulator) -> float | None:
    if acc.data_sent == 0:
        return None
    return acc.control_packets / acc.data_sent


def ids_overhead(acc: MetricsAccumulator) -> float | None:
    if acc.data_sent == 0:
        return None
    return acc.ids_overhead_packets / acc.data_sent


def average_latency(acc: MetricsAccumulator) -> float | None:
    if not acc.latencies:
        return None
    return sum(acc.latencies) / len(acc.latencies)


@dataclass
class RunResult:
    scenario_id: str
    seed: int
    nodes: int
    malicious_fraction: float
    pause_time: float
    window_size: float
    ids: str
    pdr: float | None
    routing_overhead: float | None
    ids_overhead: float | None
    avg_latency_s: float | None
    throughput_bps: float
    data_sent: int
    data_received: int
    control_packets: int
    ids_packets: int
    drop_adversarial: int
    drop_congestion: int
    drop_no_route: int
    drop_avoid: int
    in_flight: int
    declarations: int
    false_accusations: int
    honest_nodes: int
    honest_accused: int
    sweep_dimension: str = ""
    sweep_value: str = ""
    repeat: int = -1

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> dict[str, str]:
        out = {}
        for name in self.columns():
            v = getattr(self, name)
            if v is None:
                out[name] = ""
            elif isinstance(v, float):
                out[name] = repr(round(v, 10))
            else:
                out[name] = str(v)
        return out


METRICS = ("pdr", "routing_overhead", "ids_overhead", "avg_latency_s", "throughput_bps")


@dataclass
class SummaryRow:
    key: tuple
    runs: int
    mean: dict[str, float | None]
    stddev: dict[str, float | None]


def aggregate_runs(results: Sequence[dict | RunResult],
                   group_by: Iterable[str] = ("scenario_id", "nodes", "malicious_fraction",
                                              "pause_time", "window_size", "ids"),
                   metrics: Iterable[str] = METRICS) -> list[SummaryRow]:
    """Mean and population standard deviation per configuration; groups are never pooled."""
    if not results:
        raise ValueError("nothing to aggregate")
    group_by = tuple(group_by)
    metrics = tuple(metrics)
    groups: dict[tuple, list] = {}
    for r in results:
        get = r.get if isinstance(r, dict) else (lambda k, r=r: getattr(r, k))
        key = tuple(get(k) for k in group_by)
        groups.setdefault(key, []).append(get)
    out = []
    for key, getters in groups.items():
        mean, std = {}, {}
        for m in metrics:
            vals = [_num(g(m)) for g in getters]
            vals = [v for v in vals if v is not None]
            mean[m] = statistics.fmean(vals) if vals else None
            std[m] = statistics.pstdev(vals) if vals else None
        out.append(SummaryRow(key, len(getters), mean, std))
    return out


def _num(v) -> float | None:
    if v is None or v == "":
        return None
    return float(v)
