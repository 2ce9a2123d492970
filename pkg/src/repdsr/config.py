"""Scenario configuration: defaults, templates, YAML round trip and resolution."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .adversary import AdversaryProfile, ColludingLiar
from .dsr import DsrParams
from .ids import IdsConstants
from .sim import RngStreams, draw_uniform
from .traffic import CbrFlow
from .world import Position, RandomWaypoint, TraceMobility, read_trace

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or unparseable scenario configuration."""


@dataclass
class FieldConfig:
    width: float = 1000.0
    height: float = 1000.0


@dataclass
class RadioConfig:
    range: float = 250.0
    bandwidth: float = 2e6
    processing_delay: float = 0.0


@dataclass
class MobilityConfig:
    min_speed: float = 0.0
    max_speed: float = 10.0
    pause_time: float = 100.0
    trace: str | None = None


@dataclass
class FlowConfig:
    source: int
    sink: int
    start: float
    stop: float


@dataclass
class TrafficConfig:
    flow_count: int = 10
    packet_size: int = 64
    rate: float = 4.0
    start_min: float = 0.0
    start_max: float = 180.0
    flows: list[FlowConfig] | None = None


@dataclass
class AdversaryConfig:
    fraction: float = 0.0
    nodes: list[int] | None = None
    drop_probability: float = 0.99
    drops_routing: bool = False
    active_from: float = 0.0
    active_until: float | None = None
    liars: list[int] = field(default_factory=list)
    liar_victims: list[int] = field(default_factory=list)
    liar_interval: float = 5.0


@dataclass
class IdsConfig:
    enabled: bool = True
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

    def constants(self) -> IdsConstants:
        d = dataclasses.asdict(self)
        d.pop("enabled")
        return IdsConstants(**d)


@dataclass
class DsrConfig:
    rreq_timeout: float = 0.5
    rreq_max_timeout: float = 10.0
    send_buffer_timeout: float = 30.0
    max_routes_per_dest: int = 8
    active_flow_timeout: float = 2.0


@dataclass
class ScenarioConfig:
    scenario_id: str = "baseline-20"
    seed: int = 1
    horizon: float = 900.0
    nodes: int = 20
    queue_capacity: int = 50
    field: FieldConfig = dataclasses.field(default_factory=FieldConfig)
    radio: RadioConfig = dataclasses.field(default_factory=RadioConfig)
    mobility: MobilityConfig = dataclasses.field(default_factory=MobilityConfig)
    traffic: TrafficConfig = dataclasses.field(default_factory=TrafficConfig)
    adversary: AdversaryConfig = dataclasses.field(default_factory=AdversaryConfig)
    ids: IdsConfig = dataclasses.field(default_factory=IdsConfig)
    dsr: DsrConfig = dataclasses.field(default_factory=DsrConfig)

    def replace(self, **overrides: Any) -> "ScenarioConfig":
        return apply_overrides(self, overrides)

    def dsr_params(self) -> DsrParams:
        return DsrParams(send_buffer_capacity=self.queue_capacity, **dataclasses.asdict(self.dsr))

    def validate(self) -> "ScenarioConfig":
        try:
            self.ids.constants()
            AdversaryProfile(self.adversary.drop_probability, self.adversary.drops_routing,
                             self.adversary.active_from,
                             _inf(self.adversary.active_until))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.nodes < 2:
            raise ConfigError("need at least two nodes")
        if self.horizon < 0:
            raise ConfigError("horizon must be non-negative")
        if self.queue_capacity <= 0:
            raise ConfigError("queue_capacity must be positive")
        if self.radio.range <= 0 or self.radio.bandwidth <= 0:
            raise ConfigError("radio range and bandwidth must be positive")
        if not 0.0 <= self.adversary.fraction <= 1.0:
            raise ConfigError("adversary.fraction must lie in [0, 1]")
        if not 0 <= self.mobility.min_speed < self.mobility.max_speed:
            raise ConfigError("mobility speeds must satisfy 0 <= min_speed < max_speed")
        if self.mobility.pause_time < 0:
            raise ConfigError("pause_time must be non-negative")
        t = self.traffic
        if t.flows is None and t.flow_count > self.nodes * (self.nodes - 1):
            raise ConfigError("more flows than distinct node pairs")
        ids_in_range = list(self.adversary.nodes or []) + self.adversary.liars + self.adversary.liar_victims
        for fl in t.flows or []:
            ids_in_range += [fl.source, fl.sink]
        for n in ids_in_range:
            if not 0 <= n < self.nodes:
                raise ConfigError(f"node id {n} out of range 0..{self.nodes - 1}")
        return self


def _inf(v: float | None) -> float:
    return float("inf") if v is None else v


TEMPLATES: dict[str, dict[str, Any]] = {
    "baseline-10": {"scenario_id": "baseline-10", "nodes": 10, "traffic.flow_count": 5},
    "baseline-20": {"scenario_id": "baseline-20", "nodes": 20, "traffic.flow_count": 10},
}

ALIASES = {
    "malicious_fraction": "adversary.fraction",
    "malicious_pct": "adversary.fraction",
    "pause_time": "mobility.pause_time",
    "window_size": "ids.window_size",
    "flows": "traffic.flow_count",
    "range": "radio.range",
}


def template(name: str) -> ScenarioConfig:
    if name not in TEMPLATES:
        raise ConfigError(f"unknown template {name!r}; choose from {', '.join(sorted(TEMPLATES))}")
    return apply_overrides(ScenarioConfig(), TEMPLATES[name])


def _coerce(value: Any, proto: Any, name: str) -> Any:
    """Convert ``value`` to the type of ``proto``; strings are parsed as YAML scalars."""
    if isinstance(proto, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} expects a string, got {value!r}")
        return value
    if isinstance(value, str):
        try:
            value = yaml.safe_load(value)
        except yaml.YAMLError:
            raise ConfigError(f"cannot parse value for {name}: {value!r}") from None
    if isinstance(proto, bool):
        if value in ("on", "true", 1) or value is True:
            return True
        if value in ("off", "false", 0) or value is False:
            return False
        raise ConfigError(f"{name} expects a boolean, got {value!r}")
    if isinstance(proto, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{name} expects an integer, got {value!r}")
        return int(value)
    if isinstance(proto, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} expects a number, got {value!r}")
        return float(value)
    return value


def apply_overrides(cfg: ScenarioConfig, overrides: dict[str, Any]) -> ScenarioConfig:
    """Copy ``cfg`` with dotted-key overrides such as ``adversary.fraction=0.3``."""
    data = to_dict(cfg)
    for key, value in overrides.items():
        key = ALIASES.get(key, key)
        if key == "ids":
            key = "ids.enabled"
        parts = key.split(".")
        node = data
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown configuration key {key!r}")
            node = node[p]
        leaf = parts[-1]
        if leaf not in node or isinstance(node[leaf], dict):
            raise ConfigError(f"unknown configuration key {key!r}")
        if isinstance(value, str) and not isinstance(node[leaf], str):
            try:
                value = yaml.safe_load(value)
            except yaml.YAMLError:
                raise ConfigError(f"cannot parse value for {key}: {value!r}") from None
        node[leaf] = value
    return from_dict(data)


def to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


_SECTIONS = {"field": FieldConfig, "radio": RadioConfig, "mobility": MobilityConfig,
             "traffic": TrafficConfig, "adversary": AdversaryConfig, "ids": IdsConfig,
             "dsr": DsrConfig}


_PROTOS = {"float": 0.0, "int": 0, "bool": False, "str": ""}


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where!r}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        ftype = str(known[name].type)
        label = f"{where}.{name}"
        if value is None:
            if "None" not in ftype:
                raise ConfigError(f"{label} may not be null")
            kwargs[name] = None
        elif name == "flows" and cls is TrafficConfig:
            if not isinstance(value, list):
                raise ConfigError("traffic.flows must be a list")
            kwargs[name] = [_build(FlowConfig, v, "traffic.flows") for v in value]
        elif ftype.startswith("list[int]"):
            if not isinstance(value, list):
                raise ConfigError(f"{label} must be a list")
            kwargs[name] = [_coerce(v, 0, label) for v in value]
        else:
            kwargs[name] = _coerce(value, _PROTOS[ftype.split(" |")[0]], label)
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


def from_dict(data: dict[str, Any]) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    data = dict(data)
    data.pop("schema_version", None)
    kwargs = {}
    for name, value in data.items():
        if name in _SECTIONS:
            kwargs[name] = _build(_SECTIONS[name], value, name)
    top = {k: v for k, v in data.items() if k not in _SECTIONS}
    base = _build(_TopLevel, top, "scenario")
    cfg = ScenarioConfig(**dataclasses.asdict(base), **kwargs)
    return cfg.validate()


@dataclass
class _TopLevel:
    scenario_id: str = "baseline-20"
    seed: int = 1
    horizon: float = 900.0
    nodes: int = 20
    queue_capacity: int = 50


def dump(cfg: ScenarioConfig) -> str:
    data = {"schema_version": SCHEMA_VERSION, **to_dict(cfg)}
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


def save(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dump(cfg))


def load(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML: {e}") from None
    return from_dict(data)


# -- resolution of the random parts -------------------------------------------

@dataclass
class ResolvedScenario:
    flows: list[CbrFlow]
    attackers: list[int]
    liars: dict[int, ColludingLiar]
    starts: list[Position]


def resolve_attackers(cfg: ScenarioConfig, streams: RngStreams) -> list[int]:
    if cfg.adversary.nodes is not None:
        return sorted(set(cfg.adversary.nodes))
    k = int(round(cfg.adversary.fraction * cfg.nodes))
    order = list(range(cfg.nodes))
    # shuffle-then-prefix keeps attacker sets nested across fractions for one seed
    streams.get("placement/adversary").shuffle(order)
    return sorted(order[:k])


def resolve_flows(cfg: ScenarioConfig, streams: RngStreams) -> list[CbrFlow]:
    t = cfg.traffic
    if t.flows is not None:
        return [CbrFlow(f.source, f.sink, f.start, f.stop, t.packet_size, t.rate) for f in t.flows]
    stream = streams.get("traffic")
    pairs = [(s, d) for s in range(cfg.nodes) for d in range(cfg.nodes) if s != d]
    stream.shuffle(pairs)
    flows = []
    for s, d in pairs[:t.flow_count]:
        start = draw_uniform(stream, t.start_min, max(t.start_min, min(t.start_max, cfg.horizon)))
        flows.append(CbrFlow(s, d, start, cfg.horizon, t.packet_size, t.rate))
    return flows


def resolve_placement(cfg: ScenarioConfig, streams: RngStreams) -> list[Position]:
    stream = streams.get("placement")
    return [Position(draw_uniform(stream, 0.0, cfg.field.width),
                     draw_uniform(stream, 0.0, cfg.field.height)) for _ in range(cfg.nodes)]


def resolve(cfg: ScenarioConfig, streams: RngStreams) -> ResolvedScenario:
    attackers = resolve_attackers(cfg, streams)
    liars = {n: ColludingLiar(tuple(cfg.adversary.liar_victims), cfg.adversary.liar_interval)
             for n in cfg.adversary.liars}
    return ResolvedScenario(resolve_flows(cfg, streams), attackers, liars,
                            resolve_placement(cfg, streams))


def build_mobility(cfg: ScenarioConfig, streams: RngStreams, starts: list[Position]):
    m = cfg.mobility
    if m.trace:
        try:
            records = read_trace(m.trace)
        except (OSError, ValueError) as e:
            raise ConfigError(f"movement trace: {e}") from None
        if sorted(records) != list(range(cfg.nodes)):
            raise ConfigError(f"movement trace covers nodes {sorted(records)}, expected 0..{cfg.nodes - 1}")
        try:
            return [TraceMobility(records[i], cfg.field.width, cfg.field.height) for i in range(cfg.nodes)]
        except ValueError as e:
            raise ConfigError(f"movement trace: {e}") from None
    return [RandomWaypoint(starts[i], cfg.field.width, cfg.field.height, m.max_speed,
                           m.pause_time, streams.get(f"mobility/{i}"), m.min_speed)
            for i in range(cfg.nodes)]


def scenario_gen(template_name: str, overrides: dict[str, Any] | None = None,
                 seed: int | None = None) -> ScenarioConfig:
    """Fully resolved scenario: flows and adversary ids written out explicitly."""
    cfg = template(template_name)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg = apply_overrides(cfg, {"seed": seed})
    streams = RngStreams(cfg.seed)
    attackers = resolve_attackers(cfg, streams)
    flows = resolve_flows(cfg, streams)
    data = to_dict(cfg)
    data["adversary"]["nodes"] = attackers
    data["traffic"]["flows"] = [{"source": f.source, "sink": f.sink, "start": f.start, "stop": f.stop}
                                for f in flows]
    return from_dict(data)
