"""End-to-end acceptance: the desk-scale pipeline plus the property criteria.

The pipeline (seed 7, 14 nodes / 21 links, 10 levels x 20 test TMs, K = 1000,
50,000 training steps with default agent settings) runs twice through the
command line; criteria 1, 2, 3, 8 and 9 read its files.
"""

import itertools
import random

import numpy as np
import pytest

from drlroute import ddpg, nn
from drlroute.cli import main
from drlroute.delaysim import evaluate
from drlroute.experiment import eval_files
from drlroute.files import read_csv
from drlroute.routing import random_weights, shortest_paths, validate_routing
from drlroute.topology import PhysicalLink, Topology, generate_scale_free, load_topology, total_capacity
from drlroute.traffic import generate_dataset, gravity_tm, intensity_levels, load_dataset

from .conftest import ACCEPTANCE
from .oracles import brute_force_mean_delay, random_connected_graph

pytestmark = pytest.mark.slow

SEED = 7
RUN_ARGS = ["run", "--seed", str(SEED), "--per-level", "20", "--k", "1000", "--steps", "50000"]
COMPARED = ["topology.json", "traffic.jsonl", "benchmark.csv", "stats.csv", "checkpoint.json",
            "train_log.csv", "eval_log.csv", "agent_delays.csv", "learning_curve.csv", "comparison.csv"]


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, detail


@pytest.fixture(scope="module")
def runs(tmp_path_factory, monkeypatch_module):
    monkeypatch_module.setenv("LOG_LEVEL", "error")
    dirs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        assert main(RUN_ARGS + ["-o", str(out)]) == 0
        dirs.append(out)
    return dirs


@pytest.fixture(scope="module")
def monkeypatch_module():
    mp = pytest.MonkeyPatch()
    yield mp
    mp.undo()


def test_1_agent_within_first_quartile(runs):
    rows = read_csv(runs[0] / "comparison.csv")
    within = sum(r["within_q1"] == "true" for r in rows)
    detail = f"{within}/10 TI levels with agent mean <= benchmark q1 (need >= 8)"
    record(1, len(rows) == 10 and within >= 8, detail)


def test_2_learning_curve_improves_per_level(runs):
    rows = read_csv(runs[0] / "learning_curve.csv")
    steps = np.array([int(r["step"]) for r in rows])
    total = steps.max()
    levels = [h for h in rows[0] if h.startswith("ti_")]
    first = steps <= 0.1 * total
    last = steps >= 0.9 * total
    better = []
    for h in levels:
        v = np.array([float(r[h]) for r in rows])
        better.append(v[last].mean() < v[first].mean())
    detail = f"last-10% mean below first-10% mean on {sum(better)}/{len(levels)} TI levels"
    record(2, len(levels) == 10 and all(better), detail)


def test_3_one_step_inference(runs, tmp_path):
    out = runs[0]
    summary = eval_files(out / "checkpoint.json", out / "topology.json", out / "traffic.jsonl", tmp_path / "d.csv")
    n = summary["num_tms"]
    ms = 1e3 * summary["median_seconds"]
    detail = f"{summary['forward_calls']} actor passes for {n} TMs, median inference {ms:.3f} ms (< 10 ms)"
    record(3, summary["forward_calls"] == n and ms < 10.0, detail)


def test_4_every_configuration_is_valid(runs):
    t = load_topology(runs[0] / "topology.json")
    rng = np.random.default_rng(404)
    bad = 0
    for _ in range(10_000):
        bad += not validate_routing(t, shortest_paths(t, random_weights(t.num_links, rng))).ok
    agent = ddpg.load_checkpoint(runs[0] / "checkpoint.json")
    cap = total_capacity(t)
    levels = [lv.fraction for lv in intensity_levels(0.125, 1.25, 10)]
    for k in range(1000):
        tm = gravity_tm(t, levels[k % 10] * cap, rng)
        state = ddpg.encode_state(tm, t)
        # half greedy, half exploratory, as taken during training
        a = agent.act(state) if k % 2 == 0 else agent.act_explore(state, rng, epsilon=0.1, sigma=0.2)
        w = ddpg.decode_action(a)
        bad += not (np.all((a >= 0) & (a <= 1)) and validate_routing(t, shortest_paths(t, w)).ok)
    record(4, bad == 0, f"{11_000 - bad}/11000 configurations reachable and loop-free")


def test_5_gradient_check():
    t = generate_scale_free(14, 21, 10.0, SEED)
    rng = np.random.default_rng(505)
    worst = {"actor": 0.0, "critic": 0.0}
    checked = skipped = 0
    for k in range(20):
        agent = ddpg.Agent.for_topology(t, ddpg.AgentConfig(seed=1000 + k))
        state = ddpg.encode_state(gravity_tm(t, rng.uniform(0.125, 1.25) * total_capacity(t), rng), t)
        x = np.concatenate([state, rng.random(21)])
        for name, net, point in (("actor", agent.actor, state), ("critic", agent.critic, x)):
            rep = nn.gradient_report(net, point, nn.squared_norm_loss)
            worst[name] = max(worst[name], rep.worst)
            checked += rep.checked
            skipped += rep.skipped
    share = skipped / (checked + skipped)
    detail = (f"max relative error actor {worst['actor']:.2e}, critic {worst['critic']:.2e} (< 1e-4, 20 points each); "
              f"{skipped} of {checked + skipped} perturbations straddled a ReLU kink and were not compared")
    record(5, max(worst.values()) < 1e-4 and share < 5e-3, detail)


def test_6_delay_model_matches_brute_force():
    rng = random.Random(606)
    nrng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(200):
        n = rng.randint(2, 5)
        pairs = random_connected_graph(rng, n)
        caps = [rng.choice([2.0, 5.0, 10.0]) for _ in pairs]
        t = Topology(n, tuple(PhysicalLink(i, a, b, c) for i, ((a, b), c) in enumerate(zip(pairs, caps))))
        w = random_weights(len(pairs), nrng)
        tm = gravity_tm(n, rng.uniform(0.5, 30.0), nrng)
        got = evaluate(t, tm, w).mean_delay
        want = brute_force_mean_delay(n, pairs, caps, w.w.tolist(), tm.demand.tolist())
        worst = max(worst, abs(got - want) / abs(want))
    record(6, worst <= 1e-9, f"200 graphs, worst relative gap {worst:.2e} (<= 1e-9)")


def test_7_traffic_contract():
    t = generate_scale_free(14, 21, 10.0, SEED)
    levels = intensity_levels(0.125, 1.25, 10, total_capacity(t))
    ds = generate_dataset(t, levels, 100, seed=SEED)
    idx = np.array([q for q in itertools.permutations(range(14), 4)])
    i, j, k, l = idx.T
    worst_total = worst_ratio = 0.0
    diag_ok = True
    for rec in ds.records:
        d = rec.tm.demand
        diag_ok &= bool(np.all(np.diag(d) == 0))
        target = levels[rec.level_index].absolute
        worst_total = max(worst_total, abs(d.sum() - target) / target)
        lhs, rhs = d[i, j] * d[k, l], d[i, l] * d[k, j]
        worst_ratio = max(worst_ratio, float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(lhs), np.abs(rhs)))))
    detail = (f"{len(ds)} TMs: zero diagonal {diag_ok}, total error {worst_total:.1e} (<= 1e-9), "
              f"cross-ratio error {worst_ratio:.1e} (<= 1e-6)")
    record(7, len(ds) == 1000 and diag_ok and worst_total <= 1e-9 and worst_ratio <= 1e-6, detail)


def test_8_benchmark_median_rises(runs):
    medians = [float(r["median"]) for r in read_csv(runs[0] / "stats.csv")]
    rising = all(a < b for a, b in zip(medians, medians[1:]))
    record(8, len(medians) == 10 and rising, "pooled medians " + " < ".join(f"{m:.3g}" for m in medians))


def test_9_rerun_is_byte_identical(runs):
    differ = [name for name in COMPARED if (runs[0] / name).read_bytes() != (runs[1] / name).read_bytes()]
    record(9, not differ, f"{len(COMPARED) - len(differ)}/{len(COMPARED)} files identical" + (f", differ: {differ}" if differ else ""))


@pytest.mark.xfail(reason="measured 77.5% at seed 7: low-load levels sit near the equal-weight optimum", strict=False)
def test_trained_beats_untrained_on_most_matrices(runs):
    out = runs[0]
    t = load_topology(out / "topology.json")
    ds = load_dataset(out / "traffic.jsonl")
    trained = ddpg.load_checkpoint(out / "checkpoint.json")
    fresh = ddpg.Agent.for_topology(t, trained.config)
    a = ddpg.evaluate_agent(trained, ds, t)
    b = ddpg.evaluate_agent(fresh, ds, t)
    pairs = [(x, y) for lv in ds.levels for x, y in zip(a[lv], b[lv])]
    share = np.mean([x < y for x, y in pairs])
    assert share >= 0.9, share
