"""Per-node OLSR state machine.

Neighbor sensing from Hellos, the strict 2-hop set, MPR selection, MPR
restricted TC flooding with duplicate suppression, the topology set and
shortest-hop routing.  Every operation mutates the given :class:`NodeState`
in place and returns it, so the engine can keep one state object per node.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple, Union

from .estimation import EnergyReport, PerceivedEnergyRepo, mark_unreachable, record_report
from .model import (
    HelloBody,
    LinkStatus,
    Message,
    MessageKind,
    MprPolicy,
    NodeId,
    PathPolicy,
    ProtocolParams,
    SimTime,
    TcBody,
    TcRedundancy,
)

DUPLICATE_HOLD_MS = 30_000


@dataclass(slots=True)
class NeighborTuple:
    neighbor: NodeId
    symmetric: bool
    expires: SimTime
    is_mpr: bool = False
    is_mpr_selector: bool = False
    last_reported_energy: float = 0.0
    degree: int = 0


@dataclass(frozen=True)
class TwoHopTuple:
    via: NodeId
    target: NodeId
    expires: SimTime


@dataclass(frozen=True)
class TopologyTuple:
    dest: NodeId
    last_hop: NodeId
    ansn: int
    expires: SimTime


@dataclass(slots=True)
class TopologyEntry:
    ansn: int
    dests: Dict[NodeId, SimTime]


@dataclass(frozen=True)
class RoutingEntry:
    dest: NodeId
    next_hop: NodeId
    hops: int
    path_metric: float
    degraded: bool = False


@dataclass(slots=True)
class DuplicateTuple:
    originator: NodeId
    seq: int
    retransmitted: bool
    expires: SimTime


EnergyLookup = Callable[[NodeId], Optional[float]]
Adjacency = Dict[NodeId, Set[NodeId]]


@dataclass
class NodeState:
    node_id: NodeId
    neighbors: Dict[NodeId, NeighborTuple] = field(default_factory=dict)
    # via -> target -> expires; holds every advertised symmetric neighbor of `via`,
    # the strict 2-hop view is filtered on read
    two_hop: Dict[NodeId, Dict[NodeId, SimTime]] = field(default_factory=dict)
    mprs: Set[NodeId] = field(default_factory=set)
    topology: Dict[NodeId, TopologyEntry] = field(default_factory=dict)
    duplicates: Dict[Tuple[NodeId, int], DuplicateTuple] = field(default_factory=dict)
    energy: PerceivedEnergyRepo = None  # type: ignore[assignment]
    hello_seq: int = 0
    tc_seq: int = 0
    ansn: int = 0
    advertised: FrozenSet[NodeId] = frozenset()
    malformed: int = 0
    # own-link available bandwidth (bits/s); links learned from TCs use the default
    link_bandwidth: Dict[NodeId, float] = field(default_factory=dict)
    default_bandwidth: float = 2e6
    # perceived energy used by energy-aware MPR selection; defaults to last Hello value
    energy_lookup: Optional[EnergyLookup] = None
    routes: Optional[Dict[NodeId, RoutingEntry]] = None
    topology_version: int = 0
    graph_cache: Optional[Tuple[int, Adjacency]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.energy is None:
            self.energy = PerceivedEnergyRepo(self.node_id)

    def symmetric_neighbors(self) -> List[NodeId]:
        return sorted(n for n, t in self.neighbors.items() if t.symmetric)

    def mpr_selectors(self) -> List[NodeId]:
        return sorted(n for n, t in self.neighbors.items() if t.symmetric and t.is_mpr_selector)

    def strict_two_hop(self) -> List[TwoHopTuple]:
        me = self.node_id
        sym = {n for n, t in self.neighbors.items() if t.symmetric}
        out = []
        for via in sorted(self.two_hop):
            if via not in sym:
                continue
            for target, exp in sorted(self.two_hop[via].items()):
                if target != me and target not in sym:
                    out.append(TwoHopTuple(via, target, exp))
        return out

    def topology_tuples(self) -> List[TopologyTuple]:
        return [
            TopologyTuple(dest, last_hop, entry.ansn, exp)
            for last_hop, entry in sorted(self.topology.items())
            for dest, exp in sorted(entry.dests.items())
        ]

    def known_nodes(self) -> Set[NodeId]:
        known = set(self.neighbors)
        for targets in self.two_hop.values():
            known.update(targets)
        for last_hop, entry in self.topology.items():
            known.add(last_hop)
            known.update(entry.dests)
        known.discard(self.node_id)
        return known

    def _touch_topology(self) -> None:
        self.routes = None
        self.topology_version += 1


# --------------------------------------------------------------------------- MPRs


def _coverage_map(
    neighbors: Iterable[NeighborTuple], two_hop: Iterable[TwoHopTuple]
) -> Tuple[Dict[NodeId, Set[NodeId]], Dict[NodeId, int]]:
    sym = {t.neighbor: t for t in neighbors if t.symmetric}
    cover: Dict[NodeId, Set[NodeId]] = {n: set() for n in sym}
    for th in two_hop:
        if th.via in sym and th.target not in sym:
            cover[th.via].add(th.target)
    return cover, {n: t.degree for n, t in sym.items()}


def greedy_mprs(
    cover: Mapping[NodeId, Set[NodeId]],
    coverage: int,
    rank: Callable[[NodeId, int], tuple],
    prune_order: Callable[[Iterable[NodeId]], List[NodeId]],
) -> Set[NodeId]:
    """Greedy MPR skeleton shared by classic and energy-aware selection.

    ``rank(n, gain)`` orders candidates (smallest wins); ``prune_order`` lists
    the selected MPRs in the order they are tried for removal.
    """
    if coverage < 1:
        raise ValueError("coverage must be >= 1")
    covering: Dict[NodeId, Set[NodeId]] = {}
    for n, targets in cover.items():
        for t in targets:
            covering.setdefault(t, set()).add(n)
    required = {t: min(coverage, len(ns)) for t, ns in covering.items()}

    selected: Set[NodeId] = set()
    for t, ns in covering.items():
        if len(ns) <= coverage:
            selected |= ns
    count = {t: len(ns & selected) for t, ns in covering.items()}
    deficient = {t for t in covering if count[t] < required[t]}

    while deficient:
        best = None
        best_key = None
        for n, targets in cover.items():
            if n in selected:
                continue
            gain = len(targets & deficient)
            if gain == 0:
                continue
            key = rank(n, gain)
            if best_key is None or key < best_key:
                best, best_key = n, key
        selected.add(best)
        for t in cover[best]:
            count[t] += 1
            if count[t] >= required[t]:
                deficient.discard(t)

    for m in prune_order(selected):
        if all(count[t] - 1 >= required[t] for t in cover[m]):
            selected.discard(m)
            for t in cover[m]:
                count[t] -= 1
    return selected


def select_mprs_classic(
    neighbors: Iterable[NeighborTuple], two_hop: Iterable[TwoHopTuple], coverage: int = 1
) -> Set[NodeId]:
    """Greedy cover: mandatory sole covers, then max uncovered gain, then prune.

    Ties on gain go to the higher-degree neighbor, then the lower id; pruning
    scans from the highest id down.
    """
    cover, degree = _coverage_map(neighbors, two_hop)
    return greedy_mprs(
        cover,
        coverage,
        rank=lambda n, gain: (-gain, -degree[n], n),
        prune_order=lambda sel: sorted(sel, reverse=True),
    )


def recompute_mprs(state: NodeState, params: ProtocolParams) -> Set[NodeId]:
    neighbors = list(state.neighbors.values())
    two_hop = state.strict_two_hop()
    if params.mpr_policy is MprPolicy.ENERGY_AWARE:
        from .routing import select_mprs_energy

        lookup = state.energy_lookup
        energy = {
            t.neighbor: (lookup(t.neighbor) if lookup is not None else t.last_reported_energy)
            for t in neighbors
            if t.symmetric
        }
        mprs = select_mprs_energy(neighbors, two_hop, params.mpr_coverage, energy)
    else:
        mprs = select_mprs_classic(neighbors, two_hop, params.mpr_coverage)
    state.mprs = mprs
    for n, t in state.neighbors.items():
        t.is_mpr = n in mprs
    return mprs


# ------------------------------------------------------------------------- Hellos


def process_hello(
    state: NodeState, msg: Message, sender: NodeId, now: SimTime, params: ProtocolParams
) -> NodeState:
    body: HelloBody = msg.body  # type: ignore[assignment]
    me = state.node_id
    self_status = None
    sym_list = []
    for n, status in body.neighbors:
        if n == sender:
            state.malformed += 1
            return state
        if n == me:
            self_status = status
        elif status is not LinkStatus.HEARD:
            sym_list.append(n)

    hold = now + params.neighbor_hold_ms
    symmetric = self_status is not None
    changed = False
    nt = state.neighbors.get(sender)
    if nt is None:
        nt = NeighborTuple(sender, symmetric, hold)
        state.neighbors[sender] = nt
        changed = True
    elif nt.symmetric != symmetric:
        nt.symmetric = symmetric
        changed = True
    nt.expires = hold
    nt.is_mpr_selector = self_status is LinkStatus.MPR
    nt.degree = len(sym_list) + (1 if self_status in (LinkStatus.SYMMETRIC, LinkStatus.MPR) else 0)
    nt.last_reported_energy = body.reported_energy
    record_report(state.energy, EnergyReport(sender, body.reported_energy, msg.emitted_at, now))

    if symmetric:
        old = state.two_hop.get(sender)
        if old is None or len(old) != len(sym_list) or any(t not in old for t in sym_list):
            changed = True
        state.two_hop[sender] = {t: hold for t in sym_list}
    elif state.two_hop.pop(sender, None):
        changed = True

    if changed:
        recompute_mprs(state, params)
        state._touch_topology()
    return state


def generate_hello(state: NodeState, now: SimTime, actual_energy: float) -> Message:
    if actual_energy <= 0:
        raise ValueError("dead node cannot emit a Hello")
    listed = []
    for n in sorted(state.neighbors):
        t = state.neighbors[n]
        if t.symmetric and n in state.mprs:
            status = LinkStatus.MPR
        elif t.symmetric:
            status = LinkStatus.SYMMETRIC
        else:
            status = LinkStatus.HEARD
        listed.append((n, status))
    state.hello_seq += 1
    return Message(MessageKind.HELLO, state.node_id, state.hello_seq, now, HelloBody(tuple(listed), actual_energy))


# ---------------------------------------------------------------------------- TCs


def process_tc(
    state: NodeState, msg: Message, sender: NodeId, now: SimTime, params: ProtocolParams
) -> Tuple[NodeState, bool]:
    """Absorb a TC and decide whether this node retransmits it.

    Topology is updated on the first copy only.  Retransmission happens once,
    on the first copy that arrives from a symmetric neighbor which selected
    this node as MPR (a copy first heard from a non-selector does not use up
    the retransmission).
    """
    orig = msg.originator
    if orig == state.node_id:
        return state, False
    nt = state.neighbors.get(sender)
    via_selector = nt is not None and nt.symmetric and nt.is_mpr_selector
    key = (orig, msg.seq)
    dup = state.duplicates.get(key)
    if dup is not None:
        if via_selector and not dup.retransmitted:
            dup.retransmitted = True
            return state, True
        return state, False

    state.duplicates[key] = DuplicateTuple(orig, msg.seq, via_selector, now + DUPLICATE_HOLD_MS)
    body: TcBody = msg.body  # type: ignore[assignment]
    entry = state.topology.get(orig)
    if entry is None or body.ansn >= entry.ansn:
        expires = now + params.topology_hold_ms
        advertised = [d for d in body.advertised if d != state.node_id]
        if entry is None or body.ansn > entry.ansn:
            if entry is None or set(entry.dests) != set(advertised):
                state._touch_topology()
            state.topology[orig] = TopologyEntry(body.ansn, {d: expires for d in advertised})
        else:
            dests = entry.dests
            for d in advertised:
                if d not in dests:
                    state._touch_topology()
                dests[d] = expires
    repo = state.energy
    record_report(repo, EnergyReport(orig, body.reported_energy, msg.emitted_at, now))
    for subject, energy, stamped in body.neighbor_energy:
        if subject != state.node_id:
            record_report(repo, EnergyReport(subject, energy, stamped, now))
    return state, via_selector


def advertised_set(state: NodeState, redundancy: TcRedundancy) -> Set[NodeId]:
    selectors = set(state.mpr_selectors())
    if redundancy is TcRedundancy.SELECTORS_ONLY:
        return selectors
    if redundancy is TcRedundancy.SELECTORS_PLUS_MPRS:
        return selectors | state.mprs
    return set(state.symmetric_neighbors())


def generate_tc(
    state: NodeState, now: SimTime, actual_energy: float, params: ProtocolParams
) -> Optional[Message]:
    adv = frozenset(advertised_set(state, params.tc_redundancy))
    if not adv:
        return None
    if adv != state.advertised:
        state.ansn += 1
        state.advertised = adv
    state.tc_seq += 1
    relayed = []
    for n in sorted(adv):
        last = state.energy.last(n)
        if last is not None:
            relayed.append((n, last.energy, last.reported_at))
    return Message(
        MessageKind.TC, state.node_id, state.tc_seq, now,
        TcBody(tuple(sorted(adv)), actual_energy, state.ansn, tuple(relayed)),
    )


# ------------------------------------------------------------------------ routing


def advertised_graph(state: NodeState) -> Adjacency:
    """Undirected graph of what this node knows: own symmetric links, 2-hop
    links and TC-advertised links.  Edges touching this node come only from
    its symmetric neighbor set.  The result is cached per topology version
    and must not be mutated."""
    cached = state.graph_cache
    if cached is not None and cached[0] == state.topology_version:
        return cached[1]
    me = state.node_id
    adj: Adjacency = {me: set()}

    def link(a: NodeId, b: NodeId) -> None:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)

    sym = state.symmetric_neighbors()
    for n in sym:
        link(me, n)
    for via in sym:
        for t in state.two_hop.get(via, ()):
            if t != me:
                link(via, t)
    for last_hop, entry in state.topology.items():
        if last_hop == me:
            continue
        for d in entry.dests:
            if d != me:
                link(last_hop, d)
    state.graph_cache = (state.topology_version, adj)
    return adj


def lex_bfs_tree(adj: Mapping[NodeId, Iterable[NodeId]], src: NodeId) -> Dict[NodeId, Tuple[int, NodeId]]:
    """For every reachable node: (hop distance, parent) on the lexicographically
    smallest shortest path from ``src``."""
    out: Dict[NodeId, Tuple[int, NodeId]] = {src: (0, src)}
    layer = [src]  # ordered by lexicographic rank of their best paths
    depth = 0
    while layer:
        depth += 1
        parent: Dict[NodeId, NodeId] = {}
        rank: Dict[NodeId, int] = {}
        for i, u in enumerate(layer):
            for v in adj.get(u, ()):
                if v in out:
                    continue
                if v not in parent:
                    parent[v] = u
                    rank[v] = i
        nxt = sorted(parent, key=lambda v: (rank[v], v))
        for v in nxt:
            out[v] = (depth, parent[v])
        layer = nxt
    return out


def path_from_tree(tree: Mapping[NodeId, Tuple[int, NodeId]], dest: NodeId) -> List[NodeId]:
    path = [dest]
    while True:
        d, p = tree[path[-1]]
        if d == 0:
            break
        path.append(p)
    path.reverse()
    return path


def shortest_hop_routes(adj: Mapping[NodeId, Iterable[NodeId]], src: NodeId) -> Dict[NodeId, RoutingEntry]:
    tree = lex_bfs_tree(adj, src)
    routes = {}
    for dest, (hops, _) in tree.items():
        if dest == src:
            continue
        path = path_from_tree(tree, dest)
        routes[dest] = RoutingEntry(dest, path[1], hops, float(hops))
    return dict(sorted(routes.items()))


def compute_routing_table(
    state: NodeState,
    policy: PathPolicy = PathPolicy.SHORTEST_HOP,
    energy_view: Union[Mapping[NodeId, Optional[float]], EnergyLookup, None] = None,
    low_energy_threshold: float = 0.0,
) -> Dict[NodeId, RoutingEntry]:
    adj = advertised_graph(state)
    if policy is PathPolicy.SHORTEST_HOP:
        return shortest_hop_routes(adj, state.node_id)
    from . import routing

    if policy is PathPolicy.BOTTLENECK_ENERGY:
        if energy_view is None:
            energy_view = lambda n: state.energy.last(n).energy if state.energy.last(n) else None  # noqa: E731
        lookup = energy_view if callable(energy_view) else energy_view.get
        weights = {n: lookup(n) for n in adj if n != state.node_id}
        return routing.bottleneck_routes(adj, state.node_id, weights, low_energy_threshold)
    bandwidth = {}
    for a, nbrs in adj.items():
        for b in nbrs:
            if a == state.node_id:
                bw = state.link_bandwidth.get(b, state.default_bandwidth)
            elif b == state.node_id:
                bw = state.link_bandwidth.get(a, state.default_bandwidth)
            else:
                bw = state.default_bandwidth
            bandwidth[(a, b)] = bw
    return routing.widest_routes(adj, state.node_id, bandwidth)


@dataclass(frozen=True)
class NodeSnapshot:
    node: NodeId
    neighbors: Tuple[NodeId, ...]
    mprs: Tuple[NodeId, ...]
    routes: Tuple[RoutingEntry, ...]

    def to_dict(self) -> Dict[str, object]:
        return {
            "node": self.node,
            "neighbors": list(self.neighbors),
            "mprs": list(self.mprs),
            "routes": [[r.dest, r.next_hop, r.hops] for r in self.routes],
        }


def inspect_state(state: NodeState, routes: Optional[Mapping[NodeId, RoutingEntry]] = None) -> NodeSnapshot:
    """Read-only view of (symmetric neighbors, MPR set, routing table).

    Without ``routes`` the shortest-hop table over the advertised graph is used.
    """
    if routes is None:
        routes = compute_routing_table(state, PathPolicy.SHORTEST_HOP)
    return NodeSnapshot(
        state.node_id,
        tuple(state.symmetric_neighbors()),
        tuple(sorted(state.mprs)),
        tuple(routes[d] for d in sorted(routes)),
    )


# ------------------------------------------------------------------------- expiry


def expire_state(state: NodeState, now: SimTime, params: Optional[ProtocolParams] = None) -> NodeState:
    """Drop soft state with ``expires <= now``.

    MPRs are recomputed and the cached routing table invalidated only if a
    neighbor, 2-hop or topology tuple went away.  Subjects that stop being
    known at all are marked unreachable in the energy repository.
    """
    known_before = None
    changed = False

    dead = [n for n, t in state.neighbors.items() if t.expires <= now]
    if dead:
        known_before = state.known_nodes()
        for n in dead:
            del state.neighbors[n]
            state.two_hop.pop(n, None)
        changed = True
    for via in list(state.two_hop):
        targets = state.two_hop[via]
        gone = [t for t, exp in targets.items() if exp <= now]
        if gone:
            if known_before is None:
                known_before = state.known_nodes()
            for t in gone:
                del targets[t]
            changed = True
    for last_hop in list(state.topology):
        entry = state.topology[last_hop]
        gone = [d for d, exp in entry.dests.items() if exp <= now]
        if gone:
            if known_before is None:
                known_before = state.known_nodes()
            for d in gone:
                del entry.dests[d]
            if not entry.dests:
                del state.topology[last_hop]
            changed = True
    expired_dups = [k for k, d in state.duplicates.items() if d.expires <= now]
    for k in expired_dups:
        del state.duplicates[k]

    if changed:
        recompute_mprs(state, params or ProtocolParams())
        state._touch_topology()
        for subject in known_before - state.known_nodes():
            mark_unreachable(state.energy, subject)
    return state


def flood_reach(adj: Mapping[NodeId, Iterable[NodeId]], src: NodeId) -> Set[NodeId]:
    """Plain BFS reachability (used for connectivity checks)."""
    seen = {src}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                q.append(v)
    return seen
