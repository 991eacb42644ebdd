"""Network topologies: full-duplex physical links and a preferential-attachment generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_CAPACITY = 10.0


class TopologyError(ValueError):
    """Raised for malformed or infeasible topologies."""


@dataclass(frozen=True)
class PhysicalLink:
    id: int
    a: int
    b: int
    capacity: float


@dataclass(frozen=True)
class Topology:
    """Undirected multigraph-free network; every physical link is two directed edges.

    Directed edge ``2*l`` runs ``a -> b`` of link ``l`` and ``2*l + 1`` runs ``b -> a``,
    both with the full link capacity.
    """

    n: int
    links: tuple[PhysicalLink, ...]
    _edge_index: dict = field(init=False, repr=False, compare=False)
    _caps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        index = {}
        for link in self.links:
            index.setdefault((link.a, link.b), 2 * link.id)
            index.setdefault((link.b, link.a), 2 * link.id + 1)
        object.__setattr__(self, "_edge_index", index)
        caps = np.repeat([link.capacity for link in self.links], 2).astype(float)
        caps.setflags(write=False)
        object.__setattr__(self, "_caps", caps)

    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def num_edges(self) -> int:
        return 2 * len(self.links)

    def edges(self) -> list[tuple[int, int]]:
        """Directed edges as (src, dst), indexed as described on the class."""
        out = []
        for link in self.links:
            out.append((link.a, link.b))
            out.append((link.b, link.a))
        return out

    def edge_capacities(self) -> np.ndarray:
        return self._caps

    def edge_id(self, u: int, v: int) -> int:
        return self._edge_index[(u, v)]

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per node, the list of (neighbour, link id) sorted by neighbour."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for link in self.links:
            adj[link.a].append((link.b, link.id))
            adj[link.b].append((link.a, link.id))
        for row in adj:
            row.sort()
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for link in self.links:
            deg[link.a] += 1
            deg[link.b] += 1
        return deg

    def average_degree(self) -> float:
        return 2.0 * len(self.links) / self.n


def total_capacity(t: Topology) -> float:
    """Sum of physical-link capacities (one count per full-duplex link)."""
    return float(sum(link.capacity for link in t.links))


def make_topology(n: int, pairs, capacity: float = DEFAULT_CAPACITY) -> Topology:
    """Build a topology from (a, b) pairs with a uniform capacity."""
    links = tuple(PhysicalLink(i, int(a), int(b), float(capacity)) for i, (a, b) in enumerate(pairs))
    return Topology(n, links)


@dataclass
class ValidationReport:
    checks: dict[str, bool]
    messages: list[str]
    stats: dict[str, float]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def _components(n: int, pairs) -> int:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        if 0 <= a < n and 0 <= b < n:
            parent[find(a)] = find(b)
    return len({find(i) for i in range(n)})


def validate(t: Topology) -> ValidationReport:
    """Check connectivity, self-loops, duplicate pairs, ids, capacities; collect degree stats."""
    messages = []
    pairs = [(link.a, link.b) for link in t.links]

    in_range = all(0 <= a < t.n and 0 <= b < t.n for a, b in pairs)
    if not in_range:
        messages.append("link endpoint outside [0, n)")
    self_loops = [p for p in pairs if p[0] == p[1]]
    if self_loops:
        messages.append(f"self-loops: {self_loops}")
    seen, dups = set(), []
    for a, b in pairs:
        key = (min(a, b), max(a, b))
        if key in seen:
            dups.append(key)
        seen.add(key)
    if dups:
        messages.append(f"duplicate node pairs: {dups}")
    bad_cap = [link.id for link in t.links if not (math.isfinite(link.capacity) and link.capacity > 0)]
    if bad_cap:
        messages.append(f"non-positive capacity on links {bad_cap}")
    ids_ok = [link.id for link in t.links] == list(range(len(t.links)))
    if not ids_ok:
        messages.append("link ids are not 0..L-1 in order")
    connected = t.n >= 1 and in_range and _components(t.n, pairs) == 1
    if not connected:
        messages.append("graph is not connected")

    deg = t.degrees() if in_range else np.zeros(max(t.n, 1), dtype=int)
    stats = {
        "n": float(t.n),
        "links": float(len(t.links)),
        "avg_degree": t.average_degree() if t.n else 0.0,
        "min_degree": float(deg.min()) if deg.size else 0.0,
        "max_degree": float(deg.max()) if deg.size else 0.0,
    }
    checks = {
        "endpoints_in_range": in_range,
        "connected": connected,
        "no_self_loops": not self_loops,
        "no_duplicate_links": not dups,
        "positive_capacity": not bad_cap,
        "link_ids_dense": ids_ok,
    }
    return ValidationReport(checks, messages, stats)


def _pick_weighted(rng: np.random.Generator, candidates: list[int], deg: np.ndarray) -> int:
    p = deg[candidates].astype(float)
    if p.sum() <= 0:
        p = np.ones(len(candidates))
    return candidates[int(rng.choice(len(candidates), p=p / p.sum()))]


def generate_scale_free(n: int, target_links: int, capacity: float = DEFAULT_CAPACITY, seed: int = 0) -> Topology:
    """Preferential-attachment graph with exactly ``target_links`` links.

    Starts from the single link 0-1; each later node attaches to 1 or 2 existing
    nodes chosen proportionally to degree. Two-edge nodes are spread evenly so the
    running total tracks the target; whatever is still missing once all nodes are
    in is added between non-adjacent pairs, again degree-proportionally.
    """
    if n < 3:
        raise TopologyError(f"need at least 3 nodes, got {n}")
    if not (n - 1 <= target_links <= n * (n - 1) // 2):
        raise TopologyError(f"target_links={target_links} infeasible for n={n} (allowed {n - 1}..{n * (n - 1) // 2})")
    if not capacity > 0:
        raise TopologyError("capacity must be positive")

    rng = np.random.default_rng(seed)
    deg = np.zeros(n, dtype=int)
    adj = [set() for _ in range(n)]
    pairs: list[tuple[int, int]] = []

    def add(u, v):
        pairs.append((min(u, v), max(u, v)))
        adj[u].add(v)
        adj[v].add(u)
        deg[u] += 1
        deg[v] += 1

    add(0, 1)
    extra = target_links - (n - 1)
    newcomers = n - 2
    for k, v in enumerate(range(2, n)):
        # Bresenham spread of the extra edges over the newcomers
        doubles = (k + 1) * extra // newcomers - k * extra // newcomers if extra <= newcomers else 1
        m = 1 + min(doubles, 1)
        chosen = []
        for _ in range(min(m, v)):
            candidates = [u for u in range(v) if u not in chosen]
            chosen.append(_pick_weighted(rng, candidates, deg))
        for u in chosen:
            add(v, u)

    while len(pairs) < target_links:
        open_nodes = [u for u in range(n) if len(adj[u]) < n - 1]
        u = _pick_weighted(rng, open_nodes, deg)
        candidates = [x for x in range(n) if x != u and x not in adj[u]]
        add(u, _pick_weighted(rng, candidates, deg))

    pairs.sort()
    return make_topology(n, pairs, capacity)


def topology_to_dict(t: Topology) -> dict:
    return {"n": t.n, "links": [{"a": link.a, "b": link.b, "capacity": link.capacity} for link in t.links]}


def topology_from_dict(data: dict) -> Topology:
    try:
        n = int(data["n"])
        links = tuple(
            PhysicalLink(i, int(item["a"]), int(item["b"]), float(item["capacity"]))
            for i, item in enumerate(data["links"])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TopologyError(f"malformed topology: {exc}") from exc
    t = Topology(n, links)
    report = validate(t)
    if not report.ok:
        raise TopologyError("; ".join(report.messages))
    return t


def save_topology(t: Topology, path, provenance: dict | None = None) -> None:
    data = topology_to_dict(t)
    if provenance:
        data["provenance"] = provenance
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def load_topology(path) -> Topology:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TopologyError(f"{path}: {exc}") from exc
    return topology_from_dict(data)
