"""Shared domain types: ids, fixed-point time, protocol parameters, messages, metrics."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple, Union

NodeId = int
SimTime = int  # milliseconds

MS_PER_S = 1000


def to_ms(seconds: float) -> SimTime:
    return int(round(seconds * MS_PER_S))


def to_s(ms: SimTime) -> float:
    return ms / MS_PER_S


class TcRedundancy(str, enum.Enum):
    SELECTORS_ONLY = "SelectorsOnly"
    SELECTORS_PLUS_MPRS = "SelectorsPlusMprs"
    ALL_NEIGHBORS = "AllNeighbors"


class MprPolicy(str, enum.Enum):
    CLASSIC = "Classic"
    ENERGY_AWARE = "EnergyAware"


class PathPolicy(str, enum.Enum):
    SHORTEST_HOP = "ShortestHop"
    BOTTLENECK_ENERGY = "BottleneckEnergy"
    WIDEST_BANDWIDTH = "WidestBandwidth"


class EstimationMode(str, enum.Enum):
    IDEAL = "Ideal"
    REALISTIC = "Realistic"
    PREDICTION = "Prediction"
    SMART_PREDICTION = "SmartPrediction"


class LinkStatus(str, enum.Enum):
    SYMMETRIC = "Symmetric"
    HEARD = "Heard"
    MPR = "Mpr"


class MessageKind(str, enum.Enum):
    HELLO = "Hello"
    TC = "Tc"
    DATA = "Data"


@dataclass(frozen=True)
class ProtocolParams:
    """OLSR tuning knobs plus the policy selectors. Intervals are in seconds."""

    hello_interval: float = 2.0
    tc_interval: float = 5.0
    mpr_coverage: int = 1
    tc_redundancy: TcRedundancy = TcRedundancy.SELECTORS_ONLY
    neighbor_hold_time: float = 6.0
    topology_hold_time: float = 15.0
    mpr_policy: MprPolicy = MprPolicy.CLASSIC
    path_policy: PathPolicy = PathPolicy.SHORTEST_HOP
    estimation_mode: EstimationMode = EstimationMode.REALISTIC

    @property
    def hello_ms(self) -> SimTime:
        return to_ms(self.hello_interval)

    @property
    def tc_ms(self) -> SimTime:
        return to_ms(self.tc_interval)

    @property
    def neighbor_hold_ms(self) -> SimTime:
        return to_ms(self.neighbor_hold_time)

    @property
    def topology_hold_ms(self) -> SimTime:
        return to_ms(self.topology_hold_time)

    def with_(self, **changes: Any) -> "ProtocolParams":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hello_interval": self.hello_interval,
            "tc_interval": self.tc_interval,
            "mpr_coverage": self.mpr_coverage,
            "tc_redundancy": self.tc_redundancy.value,
            "neighbor_hold_time": self.neighbor_hold_time,
            "topology_hold_time": self.topology_hold_time,
            "mpr_policy": self.mpr_policy.value,
            "path_policy": self.path_policy.value,
            "estimation_mode": self.estimation_mode.value,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ProtocolParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown protocol keys: {sorted(unknown)}")
        kw = dict(d)
        for key, enum_cls in (
            ("tc_redundancy", TcRedundancy),
            ("mpr_policy", MprPolicy),
            ("path_policy", PathPolicy),
            ("estimation_mode", EstimationMode),
        ):
            if key in kw:
                kw[key] = enum_cls(kw[key])
        return cls(**kw)


def validate_params(p: ProtocolParams) -> List[str]:
    """Return every violated ProtocolParams invariant; an empty list means ok."""
    errors = []
    if not p.hello_interval > 0:
        errors.append("hello_interval must be > 0")
    if not p.tc_interval > 0:
        errors.append("tc_interval must be > 0")
    if not (isinstance(p.mpr_coverage, int) and p.mpr_coverage >= 1):
        errors.append("mpr_coverage must be >= 1")
    if p.hello_interval > 0 and p.neighbor_hold_time < 3 * p.hello_interval:
        errors.append(
            f"neighbor_hold_time: hold time < 3×interval "
            f"({p.neighbor_hold_time:g} < {3 * p.hello_interval:g})"
        )
    if p.tc_interval > 0 and p.topology_hold_time < 3 * p.tc_interval:
        errors.append(
            f"topology_hold_time: hold time < 3×interval "
            f"({p.topology_hold_time:g} < {3 * p.tc_interval:g})"
        )
    for name in ("hello_interval", "tc_interval", "neighbor_hold_time", "topology_hold_time"):
        value = getattr(p, name)
        if value > 0 and to_ms(value) == 0:
            errors.append(f"{name} below 1 ms resolution")
    return errors


@dataclass(frozen=True)
class HelloBody:
    neighbors: Tuple[Tuple[NodeId, LinkStatus], ...]
    reported_energy: float


@dataclass(frozen=True)
class TcBody:
    advertised: Tuple[NodeId, ...]
    reported_energy: float
    ansn: int
    # (node, energy J, reported_at ms): the originator's latest Hello-learned
    # energy of each advertised neighbor, relayed with the subject's own stamp
    neighbor_energy: Tuple[Tuple[NodeId, float, SimTime], ...] = ()


@dataclass(frozen=True)
class DataBody:
    source: NodeId
    destination: NodeId
    payload_size: int
    # (node, energy J, stamped_at ms) appended by every transmitting hop
    energy_trail: Tuple[Tuple[NodeId, float, SimTime], ...] = ()


Body = Union[HelloBody, TcBody, DataBody]


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    originator: NodeId
    seq: int
    emitted_at: SimTime
    body: Body

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "kind": self.kind.value,
            "originator": self.originator,
            "seq": self.seq,
            "emitted_at": self.emitted_at,
        }
        b = self.body
        if isinstance(b, HelloBody):
            out["neighbors"] = [[n, s.value] for n, s in b.neighbors]
            out["reported_energy"] = b.reported_energy
        elif isinstance(b, TcBody):
            out["advertised"] = list(b.advertised)
            out["reported_energy"] = b.reported_energy
            out["ansn"] = b.ansn
            out["neighbor_energy"] = [list(e) for e in b.neighbor_energy]
        else:
            out["source"] = b.source
            out["destination"] = b.destination
            out["payload_size"] = b.payload_size
            out["energy_trail"] = [list(e) for e in b.energy_trail]
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Message":
        kind = MessageKind(d["kind"])
        body: Body
        if kind is MessageKind.HELLO:
            body = HelloBody(
                tuple((int(n), LinkStatus(s)) for n, s in d["neighbors"]),
                float(d["reported_energy"]),
            )
        elif kind is MessageKind.TC:
            body = TcBody(
                tuple(int(n) for n in d["advertised"]),
                float(d["reported_energy"]),
                int(d["ansn"]),
                tuple((int(n), float(e), int(t)) for n, e, t in d.get("neighbor_energy", [])),
            )
        else:
            body = DataBody(
                int(d["source"]),
                int(d["destination"]),
                int(d["payload_size"]),
                tuple((int(n), float(e), int(t)) for n, e, t in d.get("energy_trail", [])),
            )
        return cls(kind, int(d["originator"]), int(d["seq"]), int(d["emitted_at"]), body)


@dataclass(frozen=True)
class LinkState:
    a: NodeId
    b: NodeId
    symmetric: bool
    nominal_bandwidth: float
    available_bandwidth: float

    def __post_init__(self):
        if not 0 <= self.available_bandwidth <= self.nominal_bandwidth:
            raise ValueError("need 0 <= available_bandwidth <= nominal_bandwidth")


@dataclass
class SampleRow:
    time: SimTime
    node: NodeId
    actual_energy: float
    mean_perceived_error: Optional[float]


@dataclass
class MetricsRecord:
    scenario_id: str
    seed: int
    packets_sent: int = 0
    packets_delivered: int = 0
    mean_inaccuracy: float = 0.0
    first_node_death: Optional[SimTime] = None
    rows: List[SampleRow] = field(default_factory=list)
    counters: Dict[str, int] = field(default_factory=dict)
    adjustment_fraction: float = 0.0
    inaccuracy_series: List[Tuple[SimTime, float]] = field(default_factory=list)
    energy_audit: Dict[NodeId, Dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.packets_delivered > self.packets_sent:
            raise ValueError("packets_delivered exceeds packets_sent")

    def summary(self) -> Dict[str, Any]:
        return {
            "scenario_id": self.scenario_id,
            "seed": self.seed,
            "packets_sent": self.packets_sent,
            "packets_delivered": self.packets_delivered,
            "mean_inaccuracy": self.mean_inaccuracy,
            "first_node_death": self.first_node_death,
            "adjustment_fraction": self.adjustment_fraction,
            "counters": dict(sorted(self.counters.items())),
        }
