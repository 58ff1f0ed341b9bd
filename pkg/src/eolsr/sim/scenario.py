"""Scenario configuration: schema, defaults, loading and validation.

A scenario file is a YAML (or JSON) mapping.  Every section is optional and
unknown keys are rejected::

    id: desk
    nodes: 30
    area: [1000, 1000]
    positions: null            # or [[x, y], ...], one per node
    placement_seed: null       # defaults to the run seed
    require_connected: true
    horizon: 300               # seconds
    sample_interval: 5
    route_refresh: 1.0         # max age of an energy-dependent route
    low_energy_threshold: 0.1  # fraction of initial energy
    energy_level: 0.1          # routing and MPR ranking see energy in steps of this fraction; 0 = raw
    ttl: 32
    overhear: true             # neighbors snoop the energy trail of data frames
    jitter: 0.1                # +-fraction of the Hello/TC interval
    radio: {range: 250, propagation_delay: 0.001, base_loss: 0.0, nominal_bandwidth: 2.0e6}
    mobility: {kind: Static, speed: [1, 5], pause: 10, tick: 1.0}
    energy: {initial: 100, tx: 0.02, rx: 0.01, idle_rate: 0.001}
    queue: {capacity: 50, service_rate: 40}
    protocol: {hello_interval: 2, tc_interval: 5, ...}
    traffic:
      random_flows: 5          # drawn with the run seed ...
      min_hops: 2
      packet_interval: 1.0
      payload: 512
      start: 10
      stop: null
      flows: []                # ... or explicit [{source, dest, packet_interval, payload, start, stop}]
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from ..model import ProtocolParams, validate_params
from .radio import RadioModel


class ScenarioError(ValueError):
    """Scenario failed to parse or validate; ``errors`` lists every problem."""

    def __init__(self, errors: List[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class Flow:
    source: int
    dest: int
    packet_interval: float
    payload: int = 512
    start: float = 10.0
    stop: Optional[float] = None


@dataclass(frozen=True)
class TrafficProfile:
    flows: Tuple[Flow, ...] = ()
    random_flows: int = 0
    min_hops: int = 2
    packet_interval: float = 1.0
    payload: int = 512
    start: float = 10.0
    stop: Optional[float] = None


@dataclass(frozen=True)
class MobilityModel:
    kind: str = "Static"
    speed: Tuple[float, float] = (1.0, 5.0)
    pause: float = 10.0
    tick: float = 1.0


@dataclass(frozen=True)
class EnergyConfig:
    initial: float = 100.0
    tx: float = 0.02
    rx: float = 0.01
    idle_rate: float = 0.001


@dataclass(frozen=True)
class QueueConfig:
    capacity: int = 50
    service_rate: float = 40.0  # frames per second


@dataclass(frozen=True)
class ScenarioConfig:
    id: str = "scenario"
    nodes: int = 30
    area: Tuple[float, float] = (1000.0, 1000.0)
    positions: Optional[Tuple[Tuple[float, float], ...]] = None
    placement_seed: Optional[int] = None
    require_connected: bool = True
    horizon: float = 300.0
    sample_interval: float = 5.0
    route_refresh: float = 1.0
    low_energy_threshold: float = 0.1
    energy_level: float = 0.1
    ttl: int = 32
    overhear: bool = True
    jitter: float = 0.1
    radio: RadioModel = field(default_factory=RadioModel)
    mobility: MobilityModel = field(default_factory=MobilityModel)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    queue: QueueConfig = field(default_factory=QueueConfig)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    traffic: TrafficProfile = field(default_factory=TrafficProfile)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["protocol"] = self.protocol.to_dict()
        return json.loads(json.dumps(d))

    def with_overrides(self, overrides: Dict[str, Any]) -> "ScenarioConfig":
        """Return a copy with dotted-path keys replaced, e.g. ``traffic.packet_interval``."""
        d = self.to_dict()
        for path, value in overrides.items():
            node = d
            parts = path.split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ScenarioError([f"unknown override path: {path}"])
                node = node[p]
            if parts[-1] not in node:
                raise ScenarioError([f"unknown override path: {path}"])
            node[parts[-1]] = value
        return scenario_from_dict(d)


_SECTIONS = {
    "radio": RadioModel,
    "mobility": MobilityModel,
    "energy": EnergyConfig,
    "queue": QueueConfig,
}


def _build(cls, data: Any, where: str, errors: List[str]):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        errors.append(f"{where}: expected a mapping")
        return cls()
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        errors.append(f"{where}: unknown keys {unknown}")
    kw = {k: v for k, v in data.items() if k in allowed}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        errors.append(f"{where}: {exc}")
        return cls()


def scenario_from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ScenarioError(["scenario: expected a mapping"])
    data = copy.deepcopy(data)
    errors: List[str] = []
    allowed = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        errors.append(f"scenario: unknown keys {unknown}")

    kw: Dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kw[name] = _build(cls, data[name], name, errors)
    if "mobility" in kw:
        kw["mobility"] = replace(kw["mobility"], speed=tuple(kw["mobility"].speed))
    if "protocol" in data:
        try:
            kw["protocol"] = ProtocolParams.from_dict(data["protocol"] or {})
        except (TypeError, ValueError) as exc:
            errors.append(f"protocol: {exc}")
    if "traffic" in data:
        t = dict(data["traffic"] or {})
        flows = []
        for i, f in enumerate(t.pop("flows", None) or []):
            flows.append(_build(Flow, f, f"traffic.flows[{i}]", errors))
        traffic = _build(TrafficProfile, t, "traffic", errors)
        kw["traffic"] = replace(traffic, flows=tuple(flows))
    for key in allowed - set(_SECTIONS) - {"protocol", "traffic"}:
        if key in data:
            kw[key] = data[key]
    if kw.get("area") is not None:
        kw["area"] = tuple(kw["area"])
    if kw.get("positions") is not None:
        kw["positions"] = tuple(tuple(p) for p in kw["positions"])
    if errors:
        raise ScenarioError(errors)
    try:
        cfg = ScenarioConfig(**kw)
    except TypeError as exc:
        raise ScenarioError([str(exc)]) from exc
    errs = validate_scenario(cfg)
    if errs:
        raise ScenarioError(errs)
    return cfg


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    with path.open() as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError([f"{path}: {exc}"]) from exc
    return scenario_from_dict(data or {})


def validate_scenario(cfg: ScenarioConfig) -> List[str]:
    errors = list(validate_params(cfg.protocol))
    if not (isinstance(cfg.nodes, int) and cfg.nodes >= 1):
        errors.append("nodes must be a positive integer")
        return errors
    if len(cfg.area) != 2 or min(cfg.area) <= 0:
        errors.append("area must be [width, height] with positive sides")
    if cfg.positions is not None and len(cfg.positions) != cfg.nodes:
        errors.append("positions must list one point per node")
    if cfg.horizon <= 0:
        errors.append("horizon must be > 0")
    if cfg.sample_interval <= 0:
        errors.append("sample_interval must be > 0")
    if cfg.route_refresh < 0:
        errors.append("route_refresh must be >= 0")
    if not 0 <= cfg.low_energy_threshold <= 1:
        errors.append("low_energy_threshold must be a fraction in [0, 1]")
    if not 0 <= cfg.energy_level < 1:
        errors.append("energy_level must be a fraction in [0, 1)")
    if cfg.ttl < 1:
        errors.append("ttl must be >= 1")
    if not 0 <= cfg.jitter < 1:
        errors.append("jitter must be in [0, 1)")
    r = cfg.radio
    if r.range <= 0:
        errors.append("radio.range must be > 0")
    if r.propagation_delay < 0:
        errors.append("radio.propagation_delay must be >= 0")
    if not 0 <= r.base_loss <= 1:
        errors.append("radio.base_loss must be in [0, 1]")
    if r.nominal_bandwidth <= 0:
        errors.append("radio.nominal_bandwidth must be > 0")
    m = cfg.mobility
    if m.kind not in ("Static", "RandomWaypoint"):
        errors.append("mobility.kind must be Static or RandomWaypoint")
    if len(m.speed) != 2 or m.speed[0] < 0 or m.speed[1] < m.speed[0]:
        errors.append("mobility.speed must be [min, max] with 0 <= min <= max")
    if m.pause < 0 or m.tick <= 0:
        errors.append("mobility.pause must be >= 0 and mobility.tick > 0")
    e = cfg.energy
    if e.initial <= 0 or e.tx < 0 or e.rx < 0 or e.idle_rate < 0:
        errors.append("energy: initial must be > 0 and costs >= 0")
    q = cfg.queue
    if q.capacity < 1 or q.service_rate <= 0:
        errors.append("queue: capacity must be >= 1 and service_rate > 0")
    t = cfg.traffic
    for i, f in enumerate(t.flows):
        if f.packet_interval <= 0:
            errors.append(f"traffic.flows[{i}]: packet_interval must be > 0")
        if not (0 <= f.source < cfg.nodes and 0 <= f.dest < cfg.nodes) or f.source == f.dest:
            errors.append(f"traffic.flows[{i}]: endpoints must be distinct node ids")
    if t.random_flows < 0:
        errors.append("traffic.random_flows must be >= 0")
    if t.random_flows and t.packet_interval <= 0:
        errors.append("traffic.packet_interval must be > 0")
    return errors
