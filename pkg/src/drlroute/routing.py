"""Link weights to loop-free all-pairs shortest paths, plus random weight sampling."""

from __future__ import annotations

import csv
import heapq
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .topology import Topology

W_MIN = 0.1
W_MAX = 1.0


@dataclass(frozen=True)
class LinkWeights:
    w: np.ndarray
    w_min: float = W_MIN
    w_max: float = W_MAX

    def __post_init__(self):
        w = np.array(self.w, dtype=float).ravel()
        if not (0 < self.w_min <= self.w_max):
            raise ValueError("need 0 < w_min <= w_max")
        if np.any(w < self.w_min) or np.any(w > self.w_max) or not np.all(np.isfinite(w)):
            raise ValueError(f"weights must lie in [{self.w_min}, {self.w_max}]")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def __len__(self):
        return len(self.w)


@dataclass(eq=False)
class RoutingConfiguration:
    """paths[s][d] is the node tuple from s to d (None on the diagonal)."""

    n: int
    paths: list[list[tuple[int, ...] | None]]
    _topology: Topology | None = field(default=None, repr=False)

    def __eq__(self, other):
        return isinstance(other, RoutingConfiguration) and self.n == other.n and self.paths == other.paths

    def path(self, s: int, d: int):
        return self.paths[s][d]

    @cached_property
    def next_hop(self) -> np.ndarray:
        """next_hop[x][d]: neighbour of x on its path to d, -1 when undefined."""
        nh = np.full((self.n, self.n), -1, dtype=int)
        for s in range(self.n):
            for d in range(self.n):
                p = self.paths[s][d]
                if p is not None and len(p) > 1:
                    nh[s, d] = p[1]
        return nh

    @cached_property
    def pair_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (pair row s*n+d, directed edge id) for every hop of every path."""
        if self._topology is None:
            raise ValueError("edge lookup needs the topology the paths were built on")
        eid = self._topology.edge_id
        rows, cols = [], []
        for s in range(self.n):
            for d in range(self.n):
                p = self.paths[s][d]
                if p is None:
                    continue
                r = s * self.n + d
                for u, v in zip(p, p[1:]):
                    rows.append(r)
                    cols.append(eid(u, v))
        return np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp)

    @cached_property
    def incidence(self) -> np.ndarray:
        """(n*n) x (2L) 0/1 matrix: row s*n+d marks the directed edges on path s->d."""
        rows, cols = self.pair_edges
        inc = np.zeros((self.n * self.n, self._topology.num_edges))
        inc[rows, cols] = 1.0
        return inc


def _dijkstra(adj, n: int, weights, source: int):
    # Heap keyed on (distance, path) so equal-cost candidates resolve to the
    # lexicographically smallest node sequence.
    dist = [float("inf")] * n
    best: list[tuple[int, ...] | None] = [None] * n
    done = [False] * n
    dist[source] = 0.0
    best[source] = (source,)
    heap = [(0.0, (source,), source)]
    while heap:
        d, p, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, link in adj[u]:
            if done[v]:
                continue
            nd = d + weights[link]
            if nd < dist[v] or (nd == dist[v] and p + (v,) < best[v]):
                dist[v] = nd
                best[v] = p + (v,)
                heapq.heappush(heap, (nd, best[v], v))
    return dist, best


def shortest_paths(t: Topology, w: LinkWeights | np.ndarray) -> RoutingConfiguration:
    """Minimum-weight path for every ordered pair, ties broken lexicographically."""
    weights = (w.w if isinstance(w, LinkWeights) else np.asarray(w, dtype=float)).tolist()
    if len(weights) != t.num_links:
        raise ValueError(f"expected {t.num_links} weights, got {len(weights)}")
    adj = t.adjacency()
    paths = []
    for s in range(t.n):
        _, best = _dijkstra(adj, t.n, weights, s)
        best[s] = None
        paths.append(best)
    return RoutingConfiguration(t.n, paths, t)


def random_weights(num_links: int, seed, w_min: float = W_MIN, w_max: float = W_MAX) -> LinkWeights:
    if num_links < 1:
        raise ValueError("need at least one link")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return LinkWeights(rng.uniform(w_min, w_max, size=num_links), w_min, w_max)


def uniform_weights(num_links: int, value: float = (W_MIN + W_MAX) / 2) -> LinkWeights:
    return LinkWeights(np.full(num_links, value))


@dataclass
class RoutingReport:
    checks: dict[str, bool]
    messages: list[str]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def validate_routing(t: Topology, rc: RoutingConfiguration) -> RoutingReport:
    """Reachability, loop-freedom, adjacency of hops and suffix (next-hop) consistency."""
    messages = []
    reach = loops = adjacent = suffix = True
    for s in range(t.n):
        for d in range(t.n):
            if s == d:
                continue
            p = rc.paths[s][d] if s < len(rc.paths) and d < len(rc.paths[s]) else None
            if not p or p[0] != s or p[-1] != d:
                reach = False
                messages.append(f"no path {s}->{d}")
                continue
            if len(set(p)) != len(p):
                loops = False
                messages.append(f"loop in path {s}->{d}: {p}")
                continue
            for u, v in zip(p, p[1:]):
                try:
                    t.edge_id(u, v)
                except KeyError:
                    adjacent = False
                    messages.append(f"path {s}->{d} uses non-link {u}-{v}")
            for i in range(1, len(p) - 1):
                x = p[i]
                if rc.paths[x][d] != p[i:]:
                    suffix = False
                    messages.append(f"path {x}->{d} is not the suffix of {s}->{d}")
                    break
    checks = {"reachable": reach, "loop_free": loops, "adjacent_hops": adjacent, "suffix_consistent": suffix}
    return RoutingReport(checks, messages)


def save_weights(w: LinkWeights, path) -> None:
    Path(path).write_text(json.dumps([float(x) for x in w.w]) + "\n")


def load_weights(path, w_min: float = W_MIN, w_max: float = W_MAX) -> LinkWeights:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list):
        raise ValueError("weights file must hold a JSON array")
    return LinkWeights(np.array(data, dtype=float), w_min, w_max)


def dump_routing(rc: RoutingConfiguration, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "path"])
        for s in range(rc.n):
            for d in range(rc.n):
                if s != d and rc.paths[s][d]:
                    writer.writerow([s, d, ">".join(map(str, rc.paths[s][d]))])
