"""Ground-truth battery accounting in integer nanojoules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

from ..model import NodeId, SimTime

NJ_PER_J = 1_000_000_000


def j_to_nj(joules: float) -> int:
    return int(round(joules * NJ_PER_J))


@dataclass(frozen=True)
class EnergyCosts:
    initial: int  # nJ
    tx_per_packet: int  # nJ
    rx_per_packet: int  # nJ
    idle_per_ms: int  # nJ per ms

    @classmethod
    def from_joules(cls, initial=100.0, tx=0.02, rx=0.01, idle_rate=0.001) -> "EnergyCosts":
        # idle_rate is J/s, i.e. 1e6 * idle_rate nJ per ms
        return cls(j_to_nj(initial), j_to_nj(tx), j_to_nj(rx), int(round(idle_rate * 1e6)))


class EnergyLedger:
    """Per-node residual energy plus a debit breakdown for the conservation audit.

    Idle drain is applied lazily: every touch first charges idle time since the
    node's previous touch.
    """

    def __init__(self, n: int, costs: EnergyCosts):
        self.costs = costs
        self.initial: List[int] = [costs.initial] * n
        self.residual: List[int] = [costs.initial] * n
        self.idle_debits: List[int] = [0] * n
        self.tx_debits: List[int] = [0] * n
        self.rx_debits: List[int] = [0] * n
        self.tx_frames: List[int] = [0] * n
        self.rx_frames: List[int] = [0] * n
        self.last_touch: List[SimTime] = [0] * n
        self.alive: List[bool] = [costs.initial > 0] * n
        self.died_at: List[Optional[SimTime]] = [None] * n

    def __len__(self) -> int:
        return len(self.residual)

    def _kill(self, node: NodeId, at: SimTime) -> None:
        self.alive[node] = False
        self.died_at[node] = at

    def touch(self, node: NodeId, now: SimTime) -> bool:
        """Charge idle drain up to ``now``; returns whether the node is alive."""
        last = self.last_touch[node]
        if now > last:
            self.last_touch[node] = now
            if self.alive[node]:
                rate = self.costs.idle_per_ms
                amount = rate * (now - last)
                res = self.residual[node]
                if amount >= res:
                    self.idle_debits[node] += res
                    self.residual[node] = 0
                    self._kill(node, last + -(-res // rate))
                else:
                    self.idle_debits[node] += amount
                    self.residual[node] = res - amount
        return self.alive[node]

    def debit_tx(self, node: NodeId, now: SimTime) -> bool:
        """Charge one transmission; False (and the node dies) if the battery
        cannot cover it."""
        if not self.touch(node, now):
            return False
        cost = self.costs.tx_per_packet
        res = self.residual[node]
        if res < cost or (res == cost and cost > 0):
            self.tx_debits[node] += res
            self.residual[node] = 0
            self._kill(node, now)
            return False
        self.residual[node] = res - cost
        self.tx_debits[node] += cost
        self.tx_frames[node] += 1
        return True

    def debit_rx(self, node: NodeId, now: SimTime) -> bool:
        if not self.touch(node, now):
            return False
        cost = self.costs.rx_per_packet
        res = self.residual[node]
        if res <= cost and cost > 0:
            self.rx_debits[node] += res
            self.residual[node] = 0
            self._kill(node, now)
            return False
        self.residual[node] = res - cost
        self.rx_debits[node] += cost
        self.rx_frames[node] += 1
        return True

    def joules(self, node: NodeId) -> float:
        return self.residual[node] / NJ_PER_J

    def joules_at(self, node: NodeId, now: SimTime) -> float:
        """Residual energy at ``now`` including not-yet-charged idle drain (read-only)."""
        if not self.alive[node]:
            return 0.0
        res = self.residual[node] - self.costs.idle_per_ms * max(0, now - self.last_touch[node])
        return max(0, res) / NJ_PER_J

    def audit(self, node: NodeId) -> Dict[str, int]:
        return {
            "initial": self.initial[node],
            "residual": self.residual[node],
            "idle": self.idle_debits[node],
            "tx": self.tx_debits[node],
            "rx": self.rx_debits[node],
            "tx_frames": self.tx_frames[node],
            "rx_frames": self.rx_frames[node],
        }

    def conserved(self, node: NodeId) -> bool:
        a = self.audit(node)
        return a["initial"] - a["residual"] == a["idle"] + a["tx"] + a["rx"]


def consume_idle(ledger: EnergyLedger, node: NodeId, dt: SimTime) -> EnergyLedger:
    """Charge ``dt`` milliseconds of idle drain to ``node`` (floored at 0 J)."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    ledger.touch(node, ledger.last_touch[node] + dt)
    return ledger


class TruthView:
    """Mapping view of actual residual joules at a fixed instant (for Ideal mode)."""

    __slots__ = ("ledger", "now")

    def __init__(self, ledger: EnergyLedger, now: SimTime):
        self.ledger = ledger
        self.now = now

    def __getitem__(self, node: NodeId) -> float:
        return self.ledger.joules_at(node, self.now)

    def get(self, node: NodeId, default=None):
        if 0 <= node < len(self.ledger):
            return self[node]
        return default
