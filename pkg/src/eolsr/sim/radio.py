"""Unit-disk radio, placement, mobility and per-node transmit queues."""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Sequence, Set, Tuple

Point = Tuple[float, float]


@dataclass(frozen=True)
class RadioModel:
    range: float = 250.0
    propagation_delay: float = 0.001  # seconds per hop
    base_loss: float = 0.0
    nominal_bandwidth: float = 2e6  # bits/s, also the default for TC-learned links

    def link_bandwidth(self, distance: float) -> float:
        """Nominal rate of a link; shorter links sustain faster rate tiers."""
        if distance <= self.range / 3:
            return self.nominal_bandwidth * 5.5
        if distance <= 2 * self.range / 3:
            return self.nominal_bandwidth * 2.75
        return self.nominal_bandwidth


def unit_disk_adjacency(positions: Sequence[Point], rng: float) -> List[Set[int]]:
    n = len(positions)
    r2 = rng * rng
    adj: List[Set[int]] = [set() for _ in range(n)]
    for i in range(n):
        xi, yi = positions[i]
        for j in range(i + 1, n):
            dx = xi - positions[j][0]
            dy = yi - positions[j][1]
            if dx * dx + dy * dy <= r2:
                adj[i].add(j)
                adj[j].add(i)
    return adj


def is_connected(adj: Sequence[Set[int]]) -> bool:
    if not adj:
        return True
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(adj)


def hop_distances(adj: Sequence[Set[int]], src: int) -> List[Optional[int]]:
    dist: List[Optional[int]] = [None] * len(adj)
    dist[src] = 0
    q = deque([src])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if dist[v] is None:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def random_placement(
    n: int, width: float, height: float, radio_range: float, seed: str,
    require_connected: bool = True, attempts: int = 1000,
) -> List[Point]:
    rng = random.Random(seed)
    for _ in range(attempts):
        pts = [(rng.uniform(0, width), rng.uniform(0, height)) for _ in range(n)]
        if not require_connected or is_connected(unit_disk_adjacency(pts, radio_range)):
            return pts
    raise ValueError(f"no connected placement after {attempts} attempts")


class RandomWaypoint:
    """Random waypoint trajectory for one node, advanced in discrete ticks."""

    def __init__(self, start: Point, width: float, height: float,
                 speed: Tuple[float, float], pause: float, seed: str):
        self.rng = random.Random(seed)
        self.width, self.height = width, height
        self.speed = speed
        self.pause = pause
        self.pos = start
        self.pause_left = 0.0
        self._new_leg()

    def _new_leg(self) -> None:
        self.target = (self.rng.uniform(0, self.width), self.rng.uniform(0, self.height))
        self.v = self.rng.uniform(*self.speed)

    def advance(self, dt: float) -> Point:
        while dt > 0:
            if self.pause_left > 0:
                used = min(dt, self.pause_left)
                self.pause_left -= used
                dt -= used
                continue
            x, y = self.pos
            tx, ty = self.target
            dist = math.hypot(tx - x, ty - y)
            if self.v <= 0:
                break
            reach = dist / self.v
            if reach <= dt:
                self.pos = self.target
                dt -= reach
                self.pause_left = self.pause
                self._new_leg()
            else:
                f = self.v * dt / dist
                self.pos = (x + (tx - x) * f, y + (ty - y) * f)
                dt = 0
        return self.pos


@dataclass
class TxQueue:
    """Bounded FIFO of frames waiting for the node's transmitter."""

    capacity: int
    frames: Deque[object] = field(default_factory=deque)
    busy: bool = False
    dropped: int = 0

    def offer(self, frame: object) -> bool:
        if len(self.frames) >= self.capacity:
            self.dropped += 1
            return False
        self.frames.append(frame)
        return True

    def occupancy(self) -> float:
        return len(self.frames) / self.capacity
