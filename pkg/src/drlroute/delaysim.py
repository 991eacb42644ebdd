"""Analytic delay model: link loads, per-link queueing delay and mean network delay.

Each directed edge is an M/M/1-style queue, ``1 / (capacity - load)``. Above
``RHO_STAR`` utilisation the curve continues as its tangent line so overloaded
links get large but finite, strictly ordered delays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .routing import LinkWeights, RoutingConfiguration, shortest_paths
from .topology import Topology
from .traffic import TrafficMatrix

RHO_STAR = 0.99


@dataclass(frozen=True)
class DelayReport:
    loads: np.ndarray  # per directed edge
    utilization: np.ndarray
    edge_delay: np.ndarray
    pair_delay: np.ndarray  # n x n, zero on the diagonal
    mean_delay: float
    max_utilization: float

    def to_dict(self) -> dict:
        return {
            "loads": self.loads.tolist(),
            "utilization": self.utilization.tolist(),
            "mean_delay": self.mean_delay,
            "max_utilization": self.max_utilization,
        }


def link_delay(capacity, load, rho_star: float = RHO_STAR):
    """Queueing delay of a link; works elementwise on arrays."""
    capacity = np.asarray(capacity, dtype=float)
    load = np.asarray(load, dtype=float)
    if np.any(capacity <= 0):
        raise ValueError("capacity must be positive")
    if np.any(load < 0):
        raise ValueError("load must be non-negative")
    knee = rho_star * capacity
    gap = capacity * (1.0 - rho_star)
    below = 1.0 / (capacity - np.minimum(load, knee))
    above = 1.0 / gap + (load - knee) / gap**2
    out = np.where(load <= knee, below, above)
    return float(out) if out.ndim == 0 else out


def link_loads(t: Topology, tm: TrafficMatrix, rc: RoutingConfiguration) -> np.ndarray:
    """Traffic carried by each directed edge: sum of the demands routed over it."""
    rows, cols = rc.pair_edges
    return np.bincount(cols, weights=tm.demand.reshape(-1)[rows], minlength=t.num_edges)


def evaluate_routing(t: Topology, tm: TrafficMatrix, rc: RoutingConfiguration, hop_delay: float = 0.0) -> DelayReport:
    total = tm.total()
    if total <= 0:
        raise ValueError("traffic matrix carries no demand")
    caps = t.edge_capacities()
    loads = link_loads(t, tm, rc)
    edelay = link_delay(caps, loads) + hop_delay
    rows, cols = rc.pair_edges
    pair = np.bincount(rows, weights=edelay[cols], minlength=t.n * t.n).reshape(t.n, t.n)
    mean = float((tm.demand * pair).sum() / total)
    util = loads / caps
    return DelayReport(loads, util, edelay, pair, mean, float(util.max()))


def evaluate(t: Topology, tm: TrafficMatrix, w: LinkWeights | np.ndarray, hop_delay: float = 0.0) -> DelayReport:
    return evaluate_routing(t, tm, shortest_paths(t, w), hop_delay)


def batch_mean_delay(t: Topology, demands: np.ndarray, rc: RoutingConfiguration, hop_delay: float = 0.0) -> np.ndarray:
    """Mean delay of many traffic matrices (shape (m, n, n)) under one routing."""
    flat = demands.reshape(len(demands), -1)
    inc = rc.incidence
    loads = flat @ inc
    edelay = link_delay(t.edge_capacities()[None, :], loads) + hop_delay
    pair = edelay @ inc.T
    return (flat * pair).sum(axis=1) / flat.sum(axis=1)


def reward(report: DelayReport) -> float:
    return -report.mean_delay


def save_report(report: DelayReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1) + "\n")
