"""Experiment steps behind the command line: each reads files, writes files, returns a summary."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bench, ddpg
from .files import file_digest, provenance, read_csv, write_csv
from .routing import shortest_paths
from .topology import generate_scale_free, load_topology, save_topology, total_capacity, validate
from .traffic import generate_dataset, intensity_levels, load_dataset, save_dataset

log = logging.getLogger(__name__)

STATS_HEADER = ["level", "q1", "median", "q3", "whisker_low", "whisker_high", "agent_mean", "within_q1"]


@dataclass
class ExperimentConfig:
    seed: int
    nodes: int = 14
    links: int = 21
    capacity: float = 10.0
    topology_path: str | None = None
    levels: int = 10
    min_fraction: float = 0.125
    max_fraction: float = 1.25
    per_level: int = 100
    masses: str = "exponential"
    bench_k: int = 1000
    hop_delay: float = 0.0
    output_dir: str = "out"
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    agent: ddpg.AgentConfig | dict | None = None

    def __post_init__(self):
        if self.agent is None:
            self.agent = ddpg.AgentConfig(seed=self.seed)
        elif isinstance(self.agent, dict):
            self.agent = ddpg.AgentConfig.from_dict({"seed": self.seed, **self.agent})
        if self.topology_path and not Path(self.topology_path).exists():
            raise FileNotFoundError(self.topology_path)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if "seed" not in data:
            raise ValueError("config must set a master seed")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent"] = self.agent.to_dict()
        return d


def make_topology_file(nodes: int, links: int, capacity: float, seed: int, out) -> dict:
    t = generate_scale_free(nodes, links, capacity, seed)
    prov = provenance("topo gen", {"nodes": nodes, "links": links, "capacity": capacity, "seed": seed})
    save_topology(t, out, prov)
    return validate(t).stats


def make_traffic_file(topology_path, levels: int, min_fraction: float, max_fraction: float, per_level: int,
                      seed: int, out, masses: str = "exponential") -> int:
    t = load_topology(topology_path)
    grid = intensity_levels(min_fraction, max_fraction, levels, total_capacity(t))
    ds = generate_dataset(t, grid, per_level, seed, masses)
    params = {"levels": levels, "min": min_fraction, "max": max_fraction, "per_level": per_level,
              "seed": seed, "masses": masses}
    prov = provenance("traffic gen", params, {"topology": topology_path})
    save_dataset(ds, out, f"config_digest={prov['config_digest']}")
    return len(ds)


def _agent_delays_by_level(path) -> dict[float, list[float]]:
    out: dict[float, list[float]] = {}
    for row in read_csv(path):
        out.setdefault(float(row["level"]), []).append(float(row["mean_delay"]))
    return out


def _stats_rows(comparisons=None, stats=None):
    rows = []
    if comparisons is not None:
        for c in comparisons:
            s = c.stats
            rows.append([c.level, s.q1, s.median, s.q3, s.whisker_low, s.whisker_high, c.agent_mean, c.within_q1])
    else:
        for level, s in stats:
            rows.append([level, s.q1, s.median, s.q3, s.whisker_low, s.whisker_high, None, None])
    return rows


def run_benchmark_files(topology_path, dataset_path, k: int, seed: int, out_dir, threads: int = 1,
                        agent_delays_path=None, hop_delay: float = 0.0) -> bench.BenchmarkResult:
    t = load_topology(topology_path)
    ds = load_dataset(dataset_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = bench.run_benchmark(t, ds, k, seed, threads, hop_delay)
    prov = provenance("bench run", {"k": k, "seed": seed, "hop_delay": hop_delay},
                      {"topology": topology_path, "dataset": dataset_path})
    digest = prov["config_digest"]

    def rows():
        for i, (lv, idx) in enumerate(zip(result.tm_levels, result.tm_indices)):
            for c in range(result.num_configs):
                yield [float(lv), int(idx), c, float(result.delays[i, c])]

    write_csv(out_dir / "benchmark.csv", ["level", "tm_index", "config_index", "mean_delay"], rows(), digest)
    if agent_delays_path:
        comps = bench.compare(_agent_delays_by_level(agent_delays_path), result)
        stats_rows = _stats_rows(comps)
    else:
        stats_rows = _stats_rows(stats=[(lv, bench.box_stats(result.pooled(lv))) for lv in result.levels])
    write_csv(out_dir / "stats.csv", STATS_HEADER, stats_rows, digest)
    return result


def train_files(topology_path, dataset_path, agent_cfg: ddpg.AgentConfig, out_dir, hop_delay: float = 0.0,
                masses: str = "exponential") -> ddpg.TrainingLog:
    t = load_topology(topology_path)
    ds = load_dataset(dataset_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env = ddpg.RoutingEnv(t, ds.levels, masses, hop_delay, agent_cfg.reward_mode)
    agent = ddpg.Agent.for_topology(t, agent_cfg)

    def progress(step, row):
        if (step + 1) % 5000 == 0:
            log.info("step %d/%d reward %.4g", step + 1, agent_cfg.total_steps, row["reward"])

    started = time.perf_counter()
    result = ddpg.train(agent, env, ds, progress)
    log.info("training took %.1f s", time.perf_counter() - started)

    prov = provenance("train", {"agent": agent_cfg.to_dict(), "hop_delay": hop_delay, "masses": masses},
                      {"topology": topology_path, "dataset": dataset_path})
    digest = prov["config_digest"]
    ddpg.save_checkpoint(agent, out_dir / "checkpoint.json", prov)
    write_csv(
        out_dir / "train_log.csv",
        ["step", "reward", "eval_mean_delay", "epsilon", "sigma", "critic_loss"],
        ([r["step"], r["reward"], r["eval_mean_delay"], r["epsilon"], r["sigma"], r["critic_loss"]]
         for r in result.rows),
        digest,
    )
    write_csv(
        out_dir / "eval_log.csv",
        ["step", "overall"] + [f"ti_{lv!r}" for lv in ds.levels],
        ([step, overall] + [means[lv] for lv in ds.levels] for step, means, overall in result.evaluations),
        digest,
    )
    return result


def eval_files(checkpoint_path, topology_path, dataset_path, out, hop_delay: float = 0.0) -> dict:
    """Per-TM agent delays; returns call counts and inference timings for the one-step check."""
    t = load_topology(topology_path)
    ds = load_dataset(dataset_path)
    agent = ddpg.load_checkpoint(checkpoint_path)
    agent.actor_forward_calls = 0
    per_level = ddpg.evaluate_agent(agent, ds, t, hop_delay)
    calls = agent.actor_forward_calls

    timings = []
    for rec in ds.records:
        state = ddpg.encode_state(rec.tm, t)
        started = time.perf_counter()
        shortest_paths(t, agent.weights(state))
        timings.append(time.perf_counter() - started)

    prov = provenance("eval", {"hop_delay": hop_delay},
                      {"checkpoint": checkpoint_path, "topology": topology_path, "dataset": dataset_path})
    counters = {lv: 0 for lv in ds.levels}
    rows = []
    for rec in ds.records:
        rows.append([rec.level, rec.index, per_level[rec.level][counters[rec.level]]])
        counters[rec.level] += 1
    write_csv(out, ["level", "tm_index", "mean_delay"], rows, prov["config_digest"])
    log.info("median inference %.3f ms over %d TMs", 1e3 * float(np.median(timings)), len(timings))
    return {"forward_calls": calls, "num_tms": len(ds), "median_seconds": float(np.median(timings)),
            "per_level": per_level}


def report_files(eval_log_path, stats_path, agent_delays_path, out_dir) -> list[dict]:
    """learning_curve.csv (eval delay per TI vs step) and comparison.csv (per-TI box vs agent)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prov = provenance("report", {}, {"eval_log": eval_log_path, "stats": stats_path,
                                     "agent_delays": agent_delays_path})
    digest = prov["config_digest"]

    curve = read_csv(eval_log_path)
    curve.sort(key=lambda r: int(r["step"]))
    header = list(curve[0].keys()) if curve else ["step", "overall"]
    write_csv(out_dir / "learning_curve.csv", header,
              ([int(r["step"])] + [float(r[h]) for h in header[1:]] for r in curve), digest)

    agent = _agent_delays_by_level(agent_delays_path)
    rows, table = [], []
    for r in read_csv(stats_path):
        level = float(r["level"])
        if level not in agent:
            raise ValueError(f"agent delays lack level {level}")
        mean = float(np.mean(agent[level]))
        q1 = float(r["q1"])
        vals = [level, q1, float(r["median"]), float(r["q3"]), float(r["whisker_low"]),
                float(r["whisker_high"]), mean, mean <= q1]
        rows.append(vals)
        table.append(dict(zip(STATS_HEADER, vals)))
    write_csv(out_dir / "comparison.csv", STATS_HEADER, rows, digest)
    return table


def run_pipeline(cfg: ExperimentConfig) -> dict:
    """Every step in order under one output directory; returns the comparison table."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    topo = out / "topology.json"
    if cfg.topology_path:
        t = load_topology(cfg.topology_path)
        save_topology(t, topo, {"source_digest": file_digest(cfg.topology_path)})
    else:
        make_topology_file(cfg.nodes, cfg.links, cfg.capacity, cfg.seed, topo)
    data = out / "traffic.jsonl"
    make_traffic_file(topo, cfg.levels, cfg.min_fraction, cfg.max_fraction, cfg.per_level, cfg.seed, data, cfg.masses)
    log.info("benchmark: %d configurations", cfg.bench_k)
    run_benchmark_files(topo, data, cfg.bench_k, cfg.seed, out, cfg.threads, hop_delay=cfg.hop_delay)
    log.info("training: %d steps", cfg.agent.total_steps)
    train_files(topo, data, cfg.agent, out, cfg.hop_delay, cfg.masses)
    summary = eval_files(out / "checkpoint.json", topo, data, out / "agent_delays.csv", cfg.hop_delay)
    table = report_files(out / "eval_log.csv", out / "stats.csv", out / "agent_delays.csv", out)
    return {"comparison": table, "eval": summary}
