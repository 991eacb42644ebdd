"""Command line: topo, traffic, bench, train, eval, report, plus run for the whole pipeline.

Exit codes: 0 success, 1 runtime error, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import ddpg, experiment
from .topology import TopologyError, load_topology, validate

log = logging.getLogger("drlroute")

LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class InvalidInput(Exception):
    pass


def _agent_overrides(args) -> dict:
    names = {
        "steps": "total_steps", "warmup": "warmup_steps", "eval_every": "eval_every",
        "actor_lr": "actor_lr", "critic_lr": "critic_lr", "tau": "tau", "gamma": "gamma",
        "batch_size": "batch_size", "reward_mode": "reward_mode", "agent_seed": "seed",
    }
    return {field: getattr(args, flag) for flag, field in names.items() if getattr(args, flag, None) is not None}


def _agent_config(args) -> ddpg.AgentConfig:
    base = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
        base = dict(data.get("agent", {}))
        if "seed" in data:
            base.setdefault("seed", data["seed"])
    if getattr(args, "seed", None) is not None:
        base["seed"] = args.seed
    base.update(_agent_overrides(args))
    return ddpg.AgentConfig.from_dict(base)


def cmd_topo(args) -> int:
    if args.action == "gen":
        stats = experiment.make_topology_file(args.nodes, args.links, args.capacity, args.seed, args.output)
        print(f"wrote {args.output}: n={int(stats['n'])} L={int(stats['links'])} avg degree {stats['avg_degree']:.3f}")
        return 0
    t = load_topology(args.file)
    report = validate(t)
    s = report.stats
    print(f"n={t.n} L={t.num_links} avg_degree={s['avg_degree']:.3f} "
          f"min_degree={int(s['min_degree'])} max_degree={int(s['max_degree'])}")
    print("degrees: " + " ".join(str(d) for d in t.degrees()))
    for name, ok in report.checks.items():
        print(f"  {name}: {'ok' if ok else 'FAIL'}")
    return 0 if report.ok else 2


def cmd_traffic(args) -> int:
    n = experiment.make_traffic_file(args.topology, args.levels, args.min, args.max, args.per_level,
                                     args.seed, args.output, args.masses)
    print(f"wrote {args.output}: {n} traffic matrices")
    return 0


def cmd_bench(args) -> int:
    result = experiment.run_benchmark_files(args.topology, args.dataset, args.k, args.seed, args.output,
                                            args.threads, args.agent_delays, args.hop_delay)
    print(f"wrote {args.output}/benchmark.csv ({result.delays.size} rows) and stats.csv")
    return 0


def cmd_train(args) -> int:
    cfg = _agent_config(args)
    result = experiment.train_files(args.topology, args.dataset, cfg, args.output, args.hop_delay, args.masses)
    if result.evaluations:
        first, last = result.evaluations[0][2], result.evaluations[-1][2]
        print(f"trained {cfg.total_steps} steps; eval mean delay {first:.4g} -> {last:.4g}")
    return 0


def cmd_eval(args) -> int:
    summary = experiment.eval_files(args.checkpoint, args.topology, args.dataset, args.output, args.hop_delay)
    print(f"wrote {args.output}: {summary['num_tms']} TMs, {summary['forward_calls']} actor passes, "
          f"median inference {1e3 * summary['median_seconds']:.3f} ms")
    return 0


def _print_table(table):
    print(f"{'TI':>7} {'q1':>12} {'median':>12} {'agent':>12}  within_q1")
    for row in table:
        print(f"{row['level']:7.3f} {row['q1']:12.5g} {row['median']:12.5g} {row['agent_mean']:12.5g}  {row['within_q1']}")


def cmd_report(args) -> int:
    d = Path(args.run_dir) if args.run_dir else None
    eval_log = args.eval_log or (d / "eval_log.csv")
    stats = args.stats or (d / "stats.csv")
    delays = args.agent_delays or (d / "agent_delays.csv")
    out = args.output or d
    if out is None:
        raise InvalidInput("report needs --output or --run-dir")
    table = experiment.report_files(eval_log, stats, delays, out)
    _print_table(table)
    return 0


def cmd_run(args) -> int:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    for flag, key in [("seed", "seed"), ("output", "output_dir"), ("k", "bench_k"), ("per_level", "per_level"),
                      ("threads", "threads"), ("topology", "topology_path")]:
        if getattr(args, flag, None) is not None:
            data[key] = getattr(args, flag)
    agent = dict(data.get("agent", {}))
    agent.update(_agent_overrides(args))
    data["agent"] = agent
    cfg = experiment.ExperimentConfig.from_dict(data)
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    summary = experiment.run_pipeline(cfg)
    _print_table(summary["comparison"])
    hits = sum(bool(r["within_q1"]) for r in summary["comparison"])
    print(f"agent within benchmark q1 on {hits}/{len(summary['comparison'])} TI levels")
    return 0


def _add_agent_flags(p):
    p.add_argument("--steps", type=int, help="training steps")
    p.add_argument("--warmup", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--actor-lr", type=float)
    p.add_argument("--critic-lr", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--reward-mode", choices=ddpg.REWARD_MODES)
    p.add_argument("--agent-seed", type=int, help="override the agent's seed only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drlroute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    threads = os.cpu_count() or 1

    topo = sub.add_parser("topo", help="generate or inspect a topology")
    tsub = topo.add_subparsers(dest="action", required=True)
    gen = tsub.add_parser("gen")
    gen.add_argument("--nodes", type=int, default=14)
    gen.add_argument("--links", type=int, default=21)
    gen.add_argument("--capacity", type=float, default=10.0)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("-o", "--output", default="topology.json")
    show = tsub.add_parser("show")
    show.add_argument("file")
    topo.set_defaults(func=cmd_topo)

    traffic = sub.add_parser("traffic", help="generate gravity traffic matrices")
    trsub = traffic.add_subparsers(dest="action", required=True)
    tg = trsub.add_parser("gen")
    tg.add_argument("--topology", required=True)
    tg.add_argument("--levels", type=int, default=10)
    tg.add_argument("--min", type=float, default=0.125)
    tg.add_argument("--max", type=float, default=1.25)
    tg.add_argument("--per-level", type=int, default=100)
    tg.add_argument("--masses", choices=["exponential", "uniform"], default="exponential")
    tg.add_argument("--seed", type=int, required=True)
    tg.add_argument("-o", "--output", default="traffic.jsonl")
    traffic.set_defaults(func=cmd_traffic)

    benchp = sub.add_parser("bench", help="random-configuration baseline")
    bsub = benchp.add_subparsers(dest="action", required=True)
    br = bsub.add_parser("run")
    br.add_argument("--topology", required=True)
    br.add_argument("--dataset", required=True)
    br.add_argument("--k", type=int, default=1000)
    br.add_argument("--seed", type=int, required=True)
    br.add_argument("--threads", type=int, default=threads)
    br.add_argument("--agent-delays", help="agent_delays.csv to fill the agent columns of stats.csv")
    br.add_argument("--hop-delay", type=float, default=0.0)
    br.add_argument("-o", "--output", default=".")
    benchp.set_defaults(func=cmd_bench)

    train = sub.add_parser("train", help="train the agent")
    train.add_argument("--topology", required=True)
    train.add_argument("--dataset", required=True, help="held-out TMs for the periodic evaluation")
    train.add_argument("--config", help="JSON experiment config; flags win")
    train.add_argument("--seed", type=int)
    train.add_argument("--masses", choices=["exponential", "uniform"], default="exponential")
    train.add_argument("--hop-delay", type=float, default=0.0)
    train.add_argument("-o", "--output", default=".")
    _add_agent_flags(train)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="one-step agent evaluation on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--topology", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--hop-delay", type=float, default=0.0)
    ev.add_argument("-o", "--output", default="agent_delays.csv")
    ev.set_defaults(func=cmd_eval)

    rep = sub.add_parser("report", help="figure data: learning curve and comparison boxes")
    rep.add_argument("--run-dir", help="directory holding eval_log.csv, stats.csv, agent_delays.csv")
    rep.add_argument("--eval-log")
    rep.add_argument("--stats")
    rep.add_argument("--agent-delays")
    rep.add_argument("-o", "--output")
    rep.set_defaults(func=cmd_report)

    run = sub.add_parser("run", help="whole pipeline from a config file")
    run.add_argument("--config")
    run.add_argument("--seed", type=int)
    run.add_argument("--topology")
    run.add_argument("--k", type=int)
    run.add_argument("--per-level", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("-o", "--output")
    _add_agent_flags(run)
    run.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("LOG_LEVEL", "info").lower()
    logging.basicConfig(level=LEVELS.get(level, logging.INFO), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except (InvalidInput, TopologyError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        log.error("invalid input: %s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("failed: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
