"""Slow, obviously-correct reference implementations used to check the fast code.

Nothing here imports from eolsr except plain data types, so a bug in the
package cannot leak into its own oracle.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import deque
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Set, Tuple

Adj = Dict[int, Set[int]]


# ------------------------------------------------------------------ graphs


def random_graph(rng: random.Random, n: int, p: float) -> Adj:
    adj: Adj = {i: set() for i in range(n)}
    for a, b in itertools.combinations(range(n), 2):
        if rng.random() < p:
            adj[a].add(b)
            adj[b].add(a)
    return adj


def simple_paths(adj: Mapping[int, Iterable[int]], src: int, dst: int) -> Iterator[Tuple[int, ...]]:
    """Every simple path from src to dst, by plain DFS."""
    stack = [(src, (src,))]
    while stack:
        u, path = stack.pop()
        if u == dst:
            yield path
            continue
        for v in adj.get(u, ()):
            if v not in path:
                stack.append((v, path + (v,)))


def bfs_hops(adj: Mapping[int, Iterable[int]], src: int) -> Dict[int, int]:
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in adj.get(u, ()):
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def _score_key(bottleneck: float, path: Tuple[int, ...]) -> tuple:
    return (-bottleneck, len(path) - 1, path)


def best_bottleneck_path(
    adj: Mapping[int, Iterable[int]], src: int, dst: int, weight: Mapping[int, Optional[float]]
) -> Optional[Tuple[float, int, Tuple[int, ...]]]:
    """Enumerate all simple paths; bottleneck = min weight of interior nodes
    (unknown counts as 0, no interior counts as +inf)."""
    best = None
    for path in simple_paths(adj, src, dst):
        interior = [weight.get(n) or 0.0 for n in path[1:-1]]
        b = min(interior) if interior else math.inf
        key = _score_key(b, path)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    return (-best[0], best[1], best[2])


def best_widest_path(
    adj: Mapping[int, Iterable[int]], src: int, dst: int, bandwidth: Mapping[Tuple[int, int], float]
) -> Optional[Tuple[float, int, Tuple[int, ...]]]:
    best = None
    for path in simple_paths(adj, src, dst):
        b = min(bandwidth[(a, c)] for a, c in zip(path, path[1:]))
        key = _score_key(b, path)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    return (-best[0], best[1], best[2])


# -------------------------------------------------------------------- MPRs


def random_neighborhood(
    rng: random.Random, max_neighbors: int = 12, max_targets: int = 20
) -> Tuple[List[int], Dict[int, Set[int]]]:
    """(symmetric neighbors, neighbor -> strict 2-hop targets it reaches).

    Neighbors are ids 1.., targets 100.., the owner is 0.
    """
    nbrs = list(range(1, rng.randint(1, max_neighbors) + 1))
    targets = list(range(100, 100 + rng.randint(0, max_targets)))
    reach: Dict[int, Set[int]] = {n: set() for n in nbrs}
    for t in targets:
        k = rng.randint(1, min(4, len(nbrs)))
        for n in rng.sample(nbrs, k):
            reach[n].add(t)
    return nbrs, reach


def coverage_holds(reach: Mapping[int, Set[int]], selected: Set[int], coverage: int) -> bool:
    """Every target is covered by min(coverage, #possible coverers) selected neighbors."""
    if not selected <= set(reach):
        return False
    targets = set().union(*reach.values()) if reach else set()
    for t in targets:
        possible = sum(1 for n in reach if t in reach[n])
        have = sum(1 for n in selected if t in reach[n])
        if have < min(coverage, possible):
            return False
    return True


def irredundant(reach: Mapping[int, Set[int]], selected: Set[int], coverage: int) -> bool:
    """No single selected relay can be dropped without breaking coverage."""
    return all(not coverage_holds(reach, selected - {m}, coverage) for m in selected)


def minimum_cover_size(reach: Mapping[int, Set[int]], coverage: int = 1) -> int:
    """Exhaustive smallest relay set satisfying coverage (small inputs only)."""
    nbrs = sorted(reach)
    for k in range(len(nbrs) + 1):
        for combo in itertools.combinations(nbrs, k):
            if coverage_holds(reach, set(combo), coverage):
                return k
    raise AssertionError("full neighbor set always covers")
