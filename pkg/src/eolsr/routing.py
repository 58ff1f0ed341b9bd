"""Energy- and bandwidth-aware route and MPR selection.

Paths are ranked by :class:`PathScore`: the larger bottleneck wins, then the
fewer hops, then the lexicographically smaller node sequence.  Both path
searches run in two phases.  A max-min (widest path) Dijkstra finds the best
achievable bottleneck, then a lexicographic BFS restricted to elements that
do not lower that bottleneck picks the shortest, smallest path among the
optimal ones.  The single-label Dijkstra alone cannot honour the hop and
sequence tie-breaks, because those do not compose along a path.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

from .model import MprPolicy, NodeId, PathPolicy
from .olsr import (
    Adjacency,
    NeighborTuple,
    RoutingEntry,
    TwoHopTuple,
    _coverage_map,
    greedy_mprs,
    lex_bfs_tree,
    path_from_tree,
)

INF = math.inf


@dataclass(frozen=True)
class VariantConfig:
    mpr_policy: MprPolicy
    path_policy: PathPolicy


VARIANTS: Dict[str, VariantConfig] = {
    "OLSR": VariantConfig(MprPolicy.CLASSIC, PathPolicy.SHORTEST_HOP),
    "ModifiedRouting": VariantConfig(MprPolicy.CLASSIC, PathPolicy.BOTTLENECK_ENERGY),
    "ModifiedMPR": VariantConfig(MprPolicy.ENERGY_AWARE, PathPolicy.SHORTEST_HOP),
    "EOLSR": VariantConfig(MprPolicy.ENERGY_AWARE, PathPolicy.BOTTLENECK_ENERGY),
}


@dataclass(frozen=True)
class PathScore:
    bottleneck: float
    hops: int
    path: Tuple[NodeId, ...]

    def key(self) -> tuple:
        # smaller key = better path
        return (-self.bottleneck, self.hops, self.path)

    def better_than(self, other: "PathScore") -> bool:
        return self.key() < other.key()


def _rank_energy(value: Optional[float]) -> float:
    # unknown energy ranks as empty but is never filtered out
    return 0.0 if value is None else value


# ---------------------------------------------------------------------- MPRs


def select_mprs_energy(
    neighbors: Iterable[NeighborTuple],
    two_hop: Iterable[TwoHopTuple],
    coverage: int,
    energy: Mapping[NodeId, Optional[float]],
) -> Set[NodeId]:
    """EOLSR-style selection: prefer the highest perceived residual energy.

    Candidates are ranked by (energy desc, newly covered targets desc,
    degree desc, id asc).  Sole covers are taken regardless of energy and
    pruning drops the lowest-energy redundant relay first.
    """
    cover, degree = _coverage_map(neighbors, two_hop)
    e = {n: _rank_energy(energy.get(n)) for n in cover}
    return greedy_mprs(
        cover,
        coverage,
        rank=lambda n, gain: (-e[n], -gain, -degree[n], n),
        prune_order=lambda sel: sorted(sel, key=lambda n: (e[n], n)),
    )


# ------------------------------------------------------------- graph helpers


def avoid_low_energy_filter(
    adj: Mapping[NodeId, Iterable[NodeId]],
    energy: Mapping[NodeId, Optional[float]],
    threshold: float,
    keep: Iterable[NodeId] = (),
) -> Adjacency:
    """Drop nodes whose perceived energy is strictly below ``threshold``.

    Nodes in ``keep`` (the query endpoints) and nodes of unknown energy stay.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    keep = set(keep)
    removed = {
        n for n in adj
        if n not in keep and energy.get(n) is not None and energy[n] < threshold
    }
    return {u: {v for v in nbrs if v not in removed} for u, nbrs in adj.items() if u not in removed}


def _widest_by_node(
    adj: Mapping[NodeId, Iterable[NodeId]], src: NodeId, w: Mapping[NodeId, float]
) -> Dict[NodeId, float]:
    """Best achievable min interior-node weight from ``src`` to every node."""
    best = {src: INF}
    heap = [(-INF, src)]
    done: Set[NodeId] = set()
    while heap:
        neg, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        out = INF if u == src else min(-neg, w[u])
        for v in adj.get(u, ()):
            if v == src or v in done:
                continue
            if out > best.get(v, -1.0):
                best[v] = out
                heapq.heappush(heap, (-out, v))
    return best


def _widest_by_link(
    adj: Mapping[NodeId, Iterable[NodeId]], src: NodeId, bw: Mapping[Tuple[NodeId, NodeId], float]
) -> Dict[NodeId, float]:
    best = {src: INF}
    heap = [(-INF, src)]
    done: Set[NodeId] = set()
    while heap:
        neg, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v in adj.get(u, ()):
            if v in done:
                continue
            val = min(-neg, bw[(u, v)])
            if val > best.get(v, -1.0):
                best[v] = val
                heapq.heappush(heap, (-val, v))
    return best


def _lex_path(adj: Mapping[NodeId, Iterable[NodeId]], src: NodeId, dst: NodeId) -> Optional[List[NodeId]]:
    tree = lex_bfs_tree(adj, src)
    if dst not in tree:
        return None
    return path_from_tree(tree, dst)


def _node_subgraph(adj, src, dst, w, floor) -> Adjacency:
    # interior nodes need weight >= floor; dst is reachable but never expanded
    sub: Adjacency = {}
    for u, nbrs in adj.items():
        if u == dst:
            continue
        if u != src and w[u] < floor:
            continue
        sub[u] = {v for v in nbrs if v == dst or v == src or w[v] >= floor}
    return sub


# --------------------------------------------------------------- single pair


def bottleneck_path(
    adj: Mapping[NodeId, Iterable[NodeId]],
    src: NodeId,
    dst: NodeId,
    weight: Mapping[NodeId, Optional[float]],
) -> Optional[PathScore]:
    if src == dst:
        raise ValueError("src == dst")
    w = {n: _rank_energy(weight.get(n)) for n in adj}
    best = _widest_by_node(adj, src, w)
    if dst not in best:
        return None
    floor = best[dst]
    path = _lex_path(_node_subgraph(adj, src, dst, w, floor), src, dst)
    return PathScore(floor, len(path) - 1, tuple(path))


def best_path_bottleneck(
    adj: Mapping[NodeId, Iterable[NodeId]],
    src: NodeId,
    dst: NodeId,
    weight: Mapping[NodeId, Optional[float]],
) -> Optional[RoutingEntry]:
    """Route maximising the minimum residual energy of the path interior."""
    score = bottleneck_path(adj, src, dst, weight)
    if score is None:
        return None
    return RoutingEntry(dst, score.path[1], score.hops, score.bottleneck)


def widest_path(
    adj: Mapping[NodeId, Iterable[NodeId]],
    src: NodeId,
    dst: NodeId,
    bandwidth: Mapping[Tuple[NodeId, NodeId], float],
) -> Optional[PathScore]:
    if src == dst:
        raise ValueError("src == dst")
    best = _widest_by_link(adj, src, bandwidth)
    if dst not in best:
        return None
    floor = best[dst]
    sub = {u: {v for v in nbrs if bandwidth[(u, v)] >= floor} for u, nbrs in adj.items()}
    path = _lex_path(sub, src, dst)
    return PathScore(floor, len(path) - 1, tuple(path))


def best_path_widest_bandwidth(
    adj: Mapping[NodeId, Iterable[NodeId]],
    src: NodeId,
    dst: NodeId,
    bandwidth: Mapping[Tuple[NodeId, NodeId], float],
) -> Optional[RoutingEntry]:
    """Route maximising the minimum available bandwidth over its links.

    ``bandwidth`` must hold both orientations of every link.
    """
    score = widest_path(adj, src, dst, bandwidth)
    if score is None:
        return None
    return RoutingEntry(dst, score.path[1], score.hops, score.bottleneck)


def filtered_bottleneck_path(
    adj: Mapping[NodeId, Iterable[NodeId]],
    src: NodeId,
    dst: NodeId,
    weight: Mapping[NodeId, Optional[float]],
    threshold: float,
) -> Tuple[Optional[PathScore], bool]:
    """Bottleneck search avoiding low-energy nodes; falls back to the full
    graph when the filter disconnects the endpoints.  Returns (score, degraded)."""
    if threshold > 0:
        sub = avoid_low_energy_filter(adj, weight, threshold, keep=(src, dst))
        score = bottleneck_path(sub, src, dst, weight) if dst in sub else None
        if score is not None:
            return score, False
        score = bottleneck_path(adj, src, dst, weight)
        return score, score is not None
    return bottleneck_path(adj, src, dst, weight), False


# ------------------------------------------------------------- whole tables


def bottleneck_routes(
    adj: Mapping[NodeId, Iterable[NodeId]],
    src: NodeId,
    weight: Mapping[NodeId, Optional[float]],
    threshold: float = 0.0,
) -> Dict[NodeId, RoutingEntry]:
    routes = {}
    for dst in sorted(adj):
        if dst == src:
            continue
        score, degraded = filtered_bottleneck_path(adj, src, dst, weight, threshold)
        if score is not None:
            routes[dst] = RoutingEntry(dst, score.path[1], score.hops, score.bottleneck, degraded)
    return routes


def widest_routes(
    adj: Mapping[NodeId, Iterable[NodeId]],
    src: NodeId,
    bandwidth: Mapping[Tuple[NodeId, NodeId], float],
) -> Dict[NodeId, RoutingEntry]:
    routes = {}
    for dst in sorted(adj):
        if dst == src:
            continue
        entry = best_path_widest_bandwidth(adj, src, dst, bandwidth)
        if entry is not None:
            routes[dst] = entry
    return routes
