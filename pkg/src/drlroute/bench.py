"""Random-configuration baseline and boxplot statistics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .delaysim import batch_mean_delay
from .routing import W_MAX, W_MIN, random_weights, shortest_paths
from .topology import Topology
from .traffic import TrafficDataset

# keeps benchmark weight streams apart from every other stream keyed on the master seed
STREAM_TAG = 0x62656E63


@dataclass
class BenchmarkResult:
    levels: list[float]
    tm_levels: np.ndarray  # level fraction of each TM, dataset order
    tm_indices: np.ndarray
    delays: np.ndarray  # (num TMs, K): mean delay of TM i under configuration k
    seed: int

    @property
    def num_configs(self) -> int:
        return self.delays.shape[1]

    def pooled(self, level: float) -> np.ndarray:
        """All delays of one intensity level, over its TMs and every configuration."""
        return self.delays[self.tm_levels == level].ravel()


@dataclass(frozen=True)
class BoxStats:
    q1: float
    median: float
    q3: float
    iqr: float
    whisker_low: float
    whisker_high: float
    count: int


def config_weights(num_links: int, seed: int, k: int, w_min: float = W_MIN, w_max: float = W_MAX):
    """Weight vector of benchmark configuration ``k``; one stream per configuration."""
    return random_weights(num_links, np.random.default_rng([seed, STREAM_TAG, k]), w_min, w_max)


def run_benchmark(t: Topology, dataset: TrafficDataset, K: int, seed: int, threads: int = 1,
                  hop_delay: float = 0.0) -> BenchmarkResult:
    """Evaluate every TM of ``dataset`` under the same ``K`` random weight vectors."""
    if K < 1:
        raise ValueError("K must be >= 1")
    demands = np.array([rec.tm.demand for rec in dataset.records])

    def column(k):
        rc = shortest_paths(t, config_weights(t.num_links, seed, k))
        return batch_mean_delay(t, demands, rc, hop_delay)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            cols = list(pool.map(column, range(K)))
    else:
        cols = [column(k) for k in range(K)]
    return BenchmarkResult(
        levels=list(dataset.levels),
        tm_levels=np.array([rec.level for rec in dataset.records]),
        tm_indices=np.array([rec.index for rec in dataset.records]),
        delays=np.column_stack(cols),
        seed=seed,
    )


def box_stats(samples) -> BoxStats:
    """Quartiles by linear interpolation between order statistics; 1.5 IQR whiskers."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("box_stats needs at least one sample")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    inside = x[(x >= q1 - 1.5 * iqr) & (x <= q3 + 1.5 * iqr)]
    return BoxStats(float(q1), float(med), float(q3), float(iqr), float(inside.min()), float(inside.max()), int(x.size))


@dataclass(frozen=True)
class Comparison:
    level: float
    stats: BoxStats
    agent_mean: float

    @property
    def within_q1(self) -> bool:
        return self.agent_mean <= self.stats.q1


def compare(agent_delays: dict[float, list[float]], benchmark: BenchmarkResult) -> list[Comparison]:
    """Per level: pooled benchmark box against the agent's mean delay."""
    if sorted(agent_delays) != sorted(benchmark.levels):
        raise ValueError("agent delays and benchmark cover different intensity levels")
    rows = []
    for level in benchmark.levels:
        n_tms = int(np.sum(benchmark.tm_levels == level))
        if len(agent_delays[level]) != n_tms:
            raise ValueError(f"level {level}: {len(agent_delays[level])} agent delays for {n_tms} benchmark TMs")
        rows.append(Comparison(level, box_stats(benchmark.pooled(level)), float(np.mean(agent_delays[level]))))
    return rows
