"""Deterministic discrete-event loop tying OLSR nodes, radio, queues and batteries together."""

from __future__ import annotations

import heapq
import math
import logging
import random
from collections import deque
from typing import Dict, List, Optional, Sequence, Set, Tuple

from ..estimation import (
    EnergyReport,
    InaccuracySample,
    inaccuracy_snapshot,
    perceive,
    record_report,
)
from ..model import (
    DataBody,
    EstimationMode,
    Message,
    MessageKind,
    MetricsRecord,
    MprPolicy,
    NodeId,
    PathPolicy,
    SampleRow,
    SimTime,
    to_ms,
)
from ..olsr import (
    NodeSnapshot,
    NodeState,
    RoutingEntry,
    advertised_graph,
    compute_routing_table,
    expire_state,
    generate_hello,
    generate_tc,
    inspect_state,
    process_hello,
    process_tc,
    recompute_mprs,
)
from .. import routing
from .energy import EnergyCosts, EnergyLedger, TruthView
from .radio import RandomWaypoint, TxQueue, hop_distances, random_placement, unit_disk_adjacency
from .scenario import Flow, ScenarioConfig, ScenarioError, validate_scenario

log = logging.getLogger(__name__)

# event kinds
HELLO, TC, TX_DONE, ARRIVE, DATA_GEN, SAMPLE, MOBILITY = range(7)


class InvariantViolation(RuntimeError):
    pass


class Frame:
    __slots__ = ("msg", "next_hop", "ttl", "trail")

    def __init__(self, msg: Message, next_hop: Optional[NodeId] = None, ttl: int = 0, trail=()):
        self.msg = msg
        self.next_hop = next_hop
        self.ttl = ttl
        self.trail = trail


def plan_flows(cfg: ScenarioConfig, adj: Sequence[Set[int]], seed: int) -> List[Flow]:
    t = cfg.traffic
    flows = list(t.flows)
    if t.random_flows:
        rng = random.Random(f"{seed}:flows")
        dist = [hop_distances(adj, s) for s in range(cfg.nodes)]
        pairs = [
            (s, d) for s in range(cfg.nodes) for d in range(cfg.nodes)
            if s != d and dist[s][d] is not None and dist[s][d] >= t.min_hops
        ]
        if len(pairs) < t.random_flows:
            pairs = [(s, d) for s in range(cfg.nodes) for d in range(cfg.nodes) if s != d]
        for s, d in rng.sample(pairs, min(t.random_flows, len(pairs))):
            flows.append(Flow(s, d, t.packet_interval, t.payload, t.start, t.stop))
    return flows


class Simulator:
    """One simulation run; build it, then call :meth:`run`."""

    def __init__(self, cfg: ScenarioConfig, seed: int, keep_samples: bool = False,
                 keep_snapshots: bool = False):
        errors = validate_scenario(cfg)
        if errors:
            raise ScenarioError(errors)
        self.cfg = cfg
        self.seed = seed
        self.params = cfg.protocol
        self.mode = cfg.protocol.estimation_mode
        self.keep_samples = keep_samples
        self.keep_snapshots = keep_snapshots
        n = cfg.nodes
        self.n = n
        self.now: SimTime = 0
        self.horizon: SimTime = to_ms(cfg.horizon)
        self._events: list = []
        self._eseq = 0

        placement_seed = cfg.placement_seed if cfg.placement_seed is not None else seed
        if cfg.positions is not None:
            self.positions = [tuple(p) for p in cfg.positions]
        else:
            self.positions = random_placement(
                n, cfg.area[0], cfg.area[1], cfg.radio.range,
                f"{placement_seed}:placement", cfg.require_connected,
            )
        self.adj = unit_disk_adjacency(self.positions, cfg.radio.range)
        self.mobility: Optional[List[RandomWaypoint]] = None
        if cfg.mobility.kind == "RandomWaypoint":
            m = cfg.mobility
            self.mobility = [
                RandomWaypoint(self.positions[i], cfg.area[0], cfg.area[1], m.speed, m.pause, f"{seed}:mob:{i}")
                for i in range(n)
            ]

        self.costs = EnergyCosts.from_joules(cfg.energy.initial, cfg.energy.tx, cfg.energy.rx, cfg.energy.idle_rate)
        self.ledger = EnergyLedger(n, self.costs)
        self.initial_j = cfg.energy.initial
        self.threshold_j = cfg.low_energy_threshold * cfg.energy.initial

        self.states = [NodeState(i, default_bandwidth=cfg.radio.nominal_bandwidth) for i in range(n)]
        for st in self.states:
            st.energy_lookup = self._lookup_for(st)
        self.queues = [TxQueue(cfg.queue.capacity) for _ in range(n)]
        self.service_ms = max(1, to_ms(1.0 / cfg.queue.service_rate))
        self.prop_ms = to_ms(cfg.radio.propagation_delay)
        self.loss_rng = random.Random(f"{seed}:loss")
        self.jitter_rng = [random.Random(f"{seed}:jitter:{i}") for i in range(n)]
        self.flows = plan_flows(cfg, self.adj, placement_seed)
        self.route_cache: List[Dict[NodeId, Tuple[SimTime, int, Optional[RoutingEntry]]]] = [{} for _ in range(n)]
        self.refresh_ms = to_ms(cfg.route_refresh)
        self.own_sample: List[Optional[Tuple[SimTime, int]]] = [None] * n
        self.data_seq = [0] * n

        self.counters: Dict[str, int] = {
            k: 0 for k in (
                "hello_tx", "tc_originated", "tc_forwarded", "data_sent", "data_delivered",
                "data_forwarded", "queue_drop_control", "queue_drop_data", "routing_failure",
                "ttl_drop", "link_loss", "random_loss", "dead_drop", "malformed", "events",
                "degraded_routes",
            )
        }
        self.record = MetricsRecord(cfg.id, seed)
        self.samples: List[InaccuracySample] = []
        self.snapshots: List[Tuple[SimTime, List[NodeSnapshot]]] = []
        self._adjusted = 0
        self._perceptions = 0
        # per-TC delivery sets and relay counts, filled only after trace_tcs()
        self.tc_receipts: Optional[Dict[Tuple[NodeId, int], Set[NodeId]]] = None
        self.tc_relays: Optional[Dict[Tuple[NodeId, int], int]] = None

    # ----------------------------------------------------------- scheduling

    def schedule(self, at: SimTime, kind: int, a=None, b=None) -> None:
        if at < self.now:
            raise InvariantViolation(f"event scheduled in the past ({at} < {self.now})")
        self._eseq += 1
        heapq.heappush(self._events, (at, self._eseq, kind, a, b))

    def _jitter(self, node: NodeId, interval_ms: SimTime) -> SimTime:
        span = int(interval_ms * self.cfg.jitter)
        if span == 0:
            return 0
        return self.jitter_rng[node].randint(-span, span)

    # ---------------------------------------------------------------- energy

    def trace_tcs(self) -> None:
        """Record who receives, and how often relays, each TC originated from now on."""
        self.tc_receipts = {}
        self.tc_relays = {}

    def truth(self) -> TruthView:
        return TruthView(self.ledger, self.now)

    def _lookup_for(self, st: NodeState):
        repo = st.energy

        quantum = self.cfg.energy_level * self.initial_j

        def lookup(subject: NodeId) -> Optional[float]:
            if self.mode is EstimationMode.IDEAL:
                e = self.ledger.joules_at(subject, self.now)
            else:
                e = perceive(repo, subject, self.now, self.mode, None, repo.own_rate)
            if e is None or quantum <= 0:
                return e
            return math.floor(e / quantum) * quantum

        return lookup

    def _on_death(self, node: NodeId) -> None:
        q = self.queues[node]
        self.counters["dead_drop"] += len(q.frames)
        q.frames.clear()
        died = self.ledger.died_at[node]
        if self.record.first_node_death is None or died < self.record.first_node_death:
            self.record.first_node_death = died

    def _alive(self, node: NodeId) -> bool:
        was = self.ledger.alive[node]
        alive = self.ledger.touch(node, self.now)
        if was and not alive:
            self._on_death(node)
        return alive

    def _update_own_rate(self, node: NodeId) -> None:
        e = self.ledger.residual[node]
        prev = self.own_sample[node]
        if prev is not None and self.now > prev[0]:
            self.states[node].energy.own_rate = max(0.0, (prev[1] - e) / 1e9 / ((self.now - prev[0]) / 1000))
        self.own_sample[node] = (self.now, e)

    # ------------------------------------------------------------- transmit

    def transmit(self, frame: Frame, sender: NodeId) -> bool:
        """Queue ``frame`` at ``sender``; False if dropped (dead sender or full queue)."""
        if not self.ledger.alive[sender]:
            self.counters["dead_drop"] += 1
            return False
        q = self.queues[sender]
        if not q.offer(frame):
            key = "queue_drop_data" if frame.msg.kind is MessageKind.DATA else "queue_drop_control"
            self.counters[key] += 1
            return False
        if not q.busy:
            q.busy = True
            self.schedule(self.now + self.service_ms, TX_DONE, sender)
        return True

    def _tx_done(self, node: NodeId) -> None:
        q = self.queues[node]
        if not q.frames:
            q.busy = False
            return
        frame = q.frames.popleft()
        was = self.ledger.alive[node]
        if not self.ledger.debit_tx(node, self.now):
            if was:
                self._on_death(node)
            else:
                self.counters["dead_drop"] += 1
            q.busy = False
            return
        if frame.msg.kind is MessageKind.DATA:
            frame.trail = frame.trail + ((node, self.ledger.residual[node] / 1e9, self.now),)
        in_range = self.adj[node]
        alive = self.ledger.alive
        loss = self.cfg.radio.base_loss
        receivers = []
        for r in sorted(in_range):
            if not alive[r]:
                continue
            if loss > 0 and self.loss_rng.random() < loss:
                if frame.next_hop == r:
                    self.counters["random_loss"] += 1
                continue
            receivers.append(r)
        if frame.next_hop is not None and frame.next_hop not in receivers:
            if frame.next_hop not in in_range or not alive[frame.next_hop]:
                self.counters["link_loss"] += 1
        if receivers:
            self.schedule(self.now + self.prop_ms, ARRIVE, (frame, node), receivers)
        if q.frames:
            self.schedule(self.now + self.service_ms, TX_DONE, node)
        else:
            q.busy = False

    # --------------------------------------------------------------- arrival

    def _arrive(self, frame: Frame, sender: NodeId, receivers: List[NodeId]) -> None:
        msg = frame.msg
        kind = msg.kind
        ledger = self.ledger
        if kind is MessageKind.DATA:
            hop = frame.next_hop
            if self.cfg.overhear:
                for r in receivers:
                    if r != hop and ledger.alive[r]:
                        self._absorb_trail(r, frame)
            if hop in receivers and ledger.alive[hop]:
                if ledger.debit_rx(hop, self.now):
                    self._absorb_trail(hop, frame)
                    self.forward_data(hop, frame)
                else:
                    self._on_death(hop)
            return
        params = self.params
        for r in receivers:
            if not ledger.alive[r]:
                continue
            if not ledger.debit_rx(r, self.now):
                self._on_death(r)
                continue
            st = self.states[r]
            if kind is MessageKind.HELLO:
                before = st.malformed
                process_hello(st, msg, sender, self.now, params)
                self.counters["malformed"] += st.malformed - before
            else:
                if self.tc_receipts is not None and (msg.originator, msg.seq) in self.tc_receipts:
                    self.tc_receipts[msg.originator, msg.seq].add(r)
                _, forward = process_tc(st, msg, sender, self.now, params)
                if forward:
                    self.counters["tc_forwarded"] += 1
                    if self.tc_relays is not None and (msg.originator, msg.seq) in self.tc_relays:
                        self.tc_relays[msg.originator, msg.seq] += 1
                    self.transmit(Frame(msg), r)

    def _absorb_trail(self, node: NodeId, frame: Frame) -> None:
        repo = self.states[node].energy
        now = self.now
        for subject, energy, stamped in frame.trail:
            if subject != node:
                record_report(repo, EnergyReport(subject, energy, stamped, now))

    # ------------------------------------------------------------------ data

    def route(self, node: NodeId, dest: NodeId) -> Optional[RoutingEntry]:
        st = self.states[node]
        if self.params.path_policy is PathPolicy.SHORTEST_HOP:
            if st.routes is None:
                st.routes = compute_routing_table(st, PathPolicy.SHORTEST_HOP)
            return st.routes.get(dest)
        cache = self.route_cache[node]
        hit = cache.get(dest)
        if hit is not None and hit[1] == st.topology_version and self.now - hit[0] < self.refresh_ms:
            return hit[2]
        entry = self._compute_route(node, dest)
        if entry is not None and entry.degraded:
            self.counters["degraded_routes"] += 1
        cache[dest] = (self.now, st.topology_version, entry)
        return entry

    def _compute_route(self, node: NodeId, dest: NodeId) -> Optional[RoutingEntry]:
        st = self.states[node]
        policy = self.params.path_policy
        if policy is PathPolicy.SHORTEST_HOP:
            return compute_routing_table(st, policy).get(dest)
        adj = advertised_graph(st)
        if dest not in adj:
            return None
        if policy is PathPolicy.BOTTLENECK_ENERGY:
            lookup = st.energy_lookup
            weights = {v: lookup(v) for v in adj if v != node}
            score, degraded = routing.filtered_bottleneck_path(adj, node, dest, weights, self.threshold_j)
            if score is None:
                return None
            return RoutingEntry(dest, score.path[1], score.hops, score.bottleneck, degraded)
        self._refresh_link_bandwidth(node)
        return compute_routing_table(st, policy).get(dest)

    def _refresh_link_bandwidth(self, node: NodeId) -> None:
        st = self.states[node]
        x, y = self.positions[node]
        free = 1.0 - self.queues[node].occupancy()
        for nb in st.neighbors:
            px, py = self.positions[nb]
            d = ((x - px) ** 2 + (y - py) ** 2) ** 0.5
            st.link_bandwidth[nb] = self.cfg.radio.link_bandwidth(d) * free

    def forward_data(self, node: NodeId, frame: Frame) -> str:
        body: DataBody = frame.msg.body  # type: ignore[assignment]
        if body.destination == node:
            self.counters["data_delivered"] += 1
            self.record.packets_delivered += 1
            return "delivered"
        if frame.ttl <= 0:
            self.counters["ttl_drop"] += 1
            return "ttl"
        entry = self.route(node, body.destination)
        if entry is None:
            self.counters["routing_failure"] += 1
            return "no_route"
        if node != body.source:
            self.counters["data_forwarded"] += 1
        self.transmit(Frame(frame.msg, entry.next_hop, frame.ttl - 1, frame.trail), node)
        return "forwarded"

    def _data_gen(self, idx: int) -> None:
        flow = self.flows[idx]
        src = flow.source
        if flow.stop is not None and self.now >= to_ms(flow.stop):
            return
        if not self._alive(src):
            return
        self.data_seq[src] += 1
        msg = Message(
            MessageKind.DATA, src, self.data_seq[src], self.now,
            DataBody(src, flow.dest, flow.payload),
        )
        self.counters["data_sent"] += 1
        self.record.packets_sent += 1
        self.forward_data(src, Frame(msg, None, self.cfg.ttl))
        self.schedule(self.now + to_ms(flow.packet_interval), DATA_GEN, idx)

    # ---------------------------------------------------------------- timers

    def _hello(self, node: NodeId) -> None:
        if not self._alive(node):
            return
        st = self.states[node]
        expire_state(st, self.now, self.params)
        if self.params.mpr_policy is MprPolicy.ENERGY_AWARE:
            recompute_mprs(st, self.params)
        self._update_own_rate(node)
        msg = generate_hello(st, self.now, self.ledger.joules(node))
        self.counters["hello_tx"] += 1
        self.transmit(Frame(msg), node)
        ms = self.params.hello_ms
        self.schedule(self.now + ms + self._jitter(node, ms), HELLO, node)

    def _tc(self, node: NodeId) -> None:
        if not self._alive(node):
            return
        st = self.states[node]
        expire_state(st, self.now, self.params)
        msg = generate_tc(st, self.now, self.ledger.joules(node), self.params)
        if msg is not None:
            self.counters["tc_originated"] += 1
            if self.tc_receipts is not None:
                self.tc_receipts[node, msg.seq] = {node}
                self.tc_relays[node, msg.seq] = 0
            self.transmit(Frame(msg), node)
        ms = self.params.tc_ms
        self.schedule(self.now + ms + self._jitter(node, ms), TC, node)

    def _mobility(self, _=None) -> None:
        tick = self.cfg.mobility.tick
        self.positions = [m.advance(tick) for m in self.mobility]
        self.adj = unit_disk_adjacency(self.positions, self.cfg.radio.range)
        self.schedule(self.now + to_ms(tick), MOBILITY)

    def _sample(self, _=None) -> None:
        for i in range(self.n):
            self._alive(i)
        truth = {i: self.ledger.joules(i) for i in range(self.n)}
        repos = {i: st.energy for i, st in enumerate(self.states)}
        samples = inaccuracy_snapshot(repos, truth, self.now, self.initial_j, self.mode)
        per_subject: Dict[NodeId, List[float]] = {}
        for s in samples:
            per_subject.setdefault(s.subject, []).append(s.error)
            self._adjusted += s.adjusted
        self._perceptions += len(samples)
        for i in range(self.n):
            errs = per_subject.get(i)
            self.record.rows.append(
                SampleRow(self.now, i, truth[i], sum(errs) / len(errs) if errs else None)
            )
        if samples:
            self.record.inaccuracy_series.append((self.now, sum(s.error for s in samples) / len(samples)))
        if self.keep_samples:
            self.samples.extend(samples)
        if self.keep_snapshots:
            self.snapshots.append((self.now, self.snapshot()))
        nxt = self.now + to_ms(self.cfg.sample_interval)
        if nxt <= self.horizon:
            self.schedule(nxt, SAMPLE)

    def snapshot(self) -> List[NodeSnapshot]:
        """Neighbor set, MPR set and routing table of every live node, as used now."""
        out = []
        for i, st in enumerate(self.states):
            if not self.ledger.alive[i]:
                continue
            routes = {}
            for dest in sorted(st.known_nodes()):
                entry = self._compute_route(i, dest)
                if entry is not None:
                    routes[dest] = entry
            out.append(inspect_state(st, routes))
        return out

    # ------------------------------------------------------------------- run

    def _bootstrap(self) -> None:
        hello_ms, tc_ms = self.params.hello_ms, self.params.tc_ms
        for i in range(self.n):
            rng = self.jitter_rng[i]
            self.schedule(rng.randrange(hello_ms), HELLO, i)
            self.schedule(rng.randrange(tc_ms), TC, i)
        frng = random.Random(f"{self.seed}:flowstart")
        for idx, f in enumerate(self.flows):
            start = to_ms(f.start) + frng.randrange(max(1, to_ms(f.packet_interval)))
            self.schedule(start, DATA_GEN, idx)
        self.schedule(0, SAMPLE)
        if self.mobility is not None:
            self.schedule(to_ms(self.cfg.mobility.tick), MOBILITY)

    def step_until(self, until: SimTime) -> None:
        events = self._events
        while events and events[0][0] <= until:
            at, _, kind, a, b = heapq.heappop(events)
            if at < self.now:
                raise InvariantViolation("event order violated")
            self.now = at
            self.counters["events"] += 1
            if kind == ARRIVE:
                self._arrive(a[0], a[1], b)
            elif kind == TX_DONE:
                self._tx_done(a)
            elif kind == HELLO:
                self._hello(a)
            elif kind == TC:
                self._tc(a)
            elif kind == DATA_GEN:
                self._data_gen(a)
            elif kind == SAMPLE:
                self._sample()
            elif kind == MOBILITY:
                self._mobility()
            if not any(self.ledger.alive):
                break

    def run(self) -> MetricsRecord:
        self._bootstrap()
        self.step_until(self.horizon)
        return self.finish()

    def finish(self) -> MetricsRecord:
        if any(self.ledger.alive):
            self.now = max(self.now, self.horizon)
        for i in range(self.n):
            self._alive(i)
        rec = self.record
        series = [v for t, v in rec.inaccuracy_series]
        rec.mean_inaccuracy = sum(series) / len(series) if series else 0.0
        rec.adjustment_fraction = self._adjusted / self._perceptions if self._perceptions else 0.0
        rec.counters = dict(self.counters, perceptions=self._perceptions, adjusted=self._adjusted)
        rec.energy_audit = {i: self.ledger.audit(i) for i in range(self.n)}
        for i in range(self.n):
            if not self.ledger.conserved(i):
                raise InvariantViolation(f"energy not conserved at node {i}")
        if rec.packets_delivered > rec.packets_sent:
            raise InvariantViolation("delivered more packets than sent")
        return rec


def run(scenario: ScenarioConfig, seed: int, keep_samples: bool = False) -> MetricsRecord:
    """Run one simulation; identical (scenario, seed) gives an identical record."""
    return Simulator(scenario, seed, keep_samples).run()
