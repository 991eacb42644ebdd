"""Deterministic policy-gradient agent that maps a traffic matrix to link weights.

Every traffic matrix is a one-step episode: observe the matrix, emit weights,
receive the negative mean delay. With ``gamma = 0`` the critic regresses the
immediate reward; the bootstrapped target is kept behind ``gamma`` for
experiments with correlated traffic sequences.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import nn
from .delaysim import evaluate_routing, reward as delay_reward
from .routing import W_MAX, W_MIN, LinkWeights, shortest_paths, uniform_weights
from .topology import Topology, total_capacity
from .traffic import TrafficDataset, TrafficMatrix, gravity_tm

log = logging.getLogger(__name__)

# named RNG substreams hanging off the master seed
STREAMS = {"init": 1, "explore": 2, "buffer": 3, "traffic": 4}

# raw: -d; relative: (d_ref - d) / d_ref; log: ln(d_ref / d); d_ref = delay under equal weights
REWARD_MODES = ("raw", "relative", "log")


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, STREAMS[name]])


@dataclass
class AgentConfig:
    actor_lr: float = 1e-5
    critic_lr: float = 1e-3
    tau: float = 0.01
    gamma: float = 0.0
    batch_size: int = 64
    replay_capacity: int = 100_000
    sigma_start: float = 0.2
    sigma_end: float = 0.02
    epsilon_start: float = 0.1
    epsilon_end: float = 0.01
    total_steps: int = 100_000
    warmup_steps: int = 1_000
    eval_every: int = 1_000
    hidden: tuple[int, ...] = (128, 64)
    reward_mode: str = "log"
    w_min: float = W_MIN
    w_max: float = W_MAX
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("step sizes must be positive")
        for name in ("tau", "gamma", "epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.sigma_start < 0 or self.sigma_end < 0:
            raise ValueError("sigma must be non-negative")
        if self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must be at least the batch size")
        if self.total_steps < 0 or self.warmup_steps < 0 or self.eval_every < 1:
            raise ValueError("step counts must be non-negative, eval_every positive")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown agent config keys: {sorted(unknown)}")
        return cls(**data)

    def sigma(self, step: int) -> float:
        return _linear(self.sigma_start, self.sigma_end, step, self.total_steps)

    def epsilon(self, step: int) -> float:
        return _linear(self.epsilon_start, self.epsilon_end, step, self.total_steps)


def _linear(start, end, step, total):
    if total <= 1:
        return start
    frac = min(max(step / (total - 1), 0.0), 1.0)
    return start + (end - start) * frac


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray | None = None


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, with_next: bool = False):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim)) if with_next else None
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def add(self, tr: Transition) -> None:
        if not np.isfinite(tr.reward):
            raise ValueError("reward must be finite")
        i = self.inserted % self.capacity
        self.states[i] = tr.state
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        if self.next_states is not None:
            self.next_states[i] = tr.state if tr.next_state is None else tr.next_state
        self.inserted += 1

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        size = len(self)
        start = self.inserted - size
        out = []
        for k in range(start, self.inserted):
            i = k % self.capacity
            nxt = None if self.next_states is None else self.next_states[i].copy()
            out.append(Transition(self.states[i].copy(), self.actions[i].copy(), float(self.rewards[i]), nxt))
        return out

    def sample(self, batch: int, rng: np.random.Generator):
        if len(self) < batch:
            raise ValueError(f"buffer holds {len(self)} transitions, batch needs {batch}")
        idx = rng.integers(0, len(self), size=batch)
        nxt = None if self.next_states is None else self.next_states[idx]
        return self.states[idx], self.actions[idx], self.rewards[idx], nxt


def encode_state(tm: TrafficMatrix, t: Topology) -> np.ndarray:
    """Row-major demand (diagonal included) divided by total network capacity."""
    if tm.n != t.n:
        raise ValueError(f"traffic matrix has {tm.n} nodes, topology {t.n}")
    return tm.demand.reshape(-1) / total_capacity(t)


def decode_action(a, w_min: float = W_MIN, w_max: float = W_MAX) -> LinkWeights:
    a = np.asarray(a, dtype=float)
    if np.any(a < 0) or np.any(a > 1) or not np.all(np.isfinite(a)):
        raise ValueError("normalized action must lie in [0, 1]")
    w = w_min + a * (w_max - w_min)
    return LinkWeights(np.clip(w, w_min, w_max), w_min, w_max)


class Agent:
    def __init__(self, state_dim: int, action_dim: int, config: AgentConfig | None = None):
        self.config = config or AgentConfig()
        self.state_dim = state_dim
        self.action_dim = action_dim
        rng = substream(self.config.seed, "init")
        hidden = list(self.config.hidden)
        relus = ["relu"] * len(hidden)
        self.actor = nn.init_mlp([state_dim, *hidden, action_dim], relus + ["sigmoid"], rng)
        self.critic = nn.init_mlp([state_dim + action_dim, *hidden, 1], relus + ["identity"], rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = nn.Adam(lr=self.config.actor_lr)
        self.critic_opt = nn.Adam(lr=self.config.critic_lr)
        self.steps_done = 0
        self.actor_forward_calls = 0

    @classmethod
    def for_topology(cls, t: Topology, config: AgentConfig | None = None) -> "Agent":
        return cls(t.n * t.n, t.num_links, config)

    def q_value(self, states, actions, target: bool = False) -> np.ndarray:
        net = self.critic_target if target else self.critic
        return net(np.hstack([states, actions]))[:, 0]

    def act(self, state) -> np.ndarray:
        """The deterministic policy: one actor forward pass."""
        self.actor_forward_calls += 1
        return nn.forward(self.actor, state)[0]

    def act_explore(self, state, rng: np.random.Generator, epsilon: float | None = None, sigma: float | None = None):
        """Full random override with probability epsilon, else clipped Gaussian jitter."""
        eps = self.config.epsilon(self.steps_done) if epsilon is None else epsilon
        sig = self.config.sigma(self.steps_done) if sigma is None else sigma
        if rng.random() < eps:
            return rng.random(self.action_dim)
        a = self.act(state)
        if sig > 0:
            a = a + rng.normal(0.0, sig, size=self.action_dim)
        return np.clip(a, 0.0, 1.0)

    def weights(self, state) -> LinkWeights:
        return decode_action(self.act(state), self.config.w_min, self.config.w_max)

    def checkpoint(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "steps_done": self.steps_done,
            "actor": nn.mlp_to_dict(self.actor),
            "critic": nn.mlp_to_dict(self.critic),
            "actor_target": nn.mlp_to_dict(self.actor_target),
            "critic_target": nn.mlp_to_dict(self.critic_target),
        }

    @classmethod
    def from_checkpoint(cls, data: dict) -> "Agent":
        agent = cls(data["state_dim"], data["action_dim"], AgentConfig.from_dict(data["config"]))
        agent.actor = nn.mlp_from_dict(data["actor"])
        agent.critic = nn.mlp_from_dict(data["critic"])
        agent.actor_target = nn.mlp_from_dict(data["actor_target"])
        agent.critic_target = nn.mlp_from_dict(data["critic_target"])
        agent.steps_done = int(data.get("steps_done", 0))
        return agent


def save_checkpoint(agent: Agent, path, provenance: dict | None = None) -> None:
    data = agent.checkpoint()
    if provenance:
        data["provenance"] = provenance
    Path(path).write_text(json.dumps(data) + "\n")


def load_checkpoint(path) -> Agent:
    return Agent.from_checkpoint(json.loads(Path(path).read_text()))


@dataclass
class StepDiagnostics:
    critic_loss: float
    actor_objective: float


def train_step(agent: Agent, buffer: ReplayBuffer, rng: np.random.Generator) -> StepDiagnostics:
    cfg = agent.config
    s, a, r, s_next = buffer.sample(cfg.batch_size, rng)
    batch = len(r)

    y = r.copy()
    if cfg.gamma > 0 and s_next is not None:
        a_next = agent.actor_target(s_next)
        y = y + cfg.gamma * agent.q_value(s_next, a_next, target=True)

    # critic: mean squared error against y
    q, cache = nn.forward(agent.critic, np.hstack([s, a]))
    err = q[:, 0] - y
    critic_loss = float(np.mean(err**2))
    grads, _ = nn.backward(agent.critic, cache, (2.0 / batch) * err[:, None])
    agent.critic_opt.step(agent.critic.params(), grads)

    # actor: ascend mean Q(s, mu(s)) through the critic's action input
    mu, actor_cache = nn.forward(agent.actor, s)
    q_pi, critic_cache = nn.forward(agent.critic, np.hstack([s, mu]))
    _, dx = nn.backward(agent.critic, critic_cache, np.full((batch, 1), -1.0 / batch))
    actor_grads, _ = nn.backward(agent.actor, actor_cache, dx[:, agent.state_dim:])
    agent.actor_opt.step(agent.actor.params(), actor_grads)

    nn.soft_update(agent.critic_target, agent.critic, cfg.tau)
    nn.soft_update(agent.actor_target, agent.actor, cfg.tau)
    return StepDiagnostics(critic_loss, float(q_pi.mean()))


class RoutingEnv:
    """Delay model plus the training traffic sampler."""

    def __init__(self, t: Topology, levels, mass_dist: str = "exponential", hop_delay: float = 0.0,
                 reward_mode: str = "log"):
        self.topology = t
        self.levels = [float(lv) for lv in levels]
        self.mass_dist = mass_dist
        self.hop_delay = hop_delay
        self.reward_mode = reward_mode
        self.capacity = total_capacity(t)
        self._reference = shortest_paths(t, uniform_weights(t.num_links))

    def sample_tm(self, rng: np.random.Generator) -> TrafficMatrix:
        level = self.levels[int(rng.integers(len(self.levels)))]
        return gravity_tm(self.topology, level * self.capacity, rng, mass_dist=self.mass_dist)

    def delay(self, tm: TrafficMatrix, w: LinkWeights) -> float:
        rc = shortest_paths(self.topology, w)
        return evaluate_routing(self.topology, tm, rc, self.hop_delay).mean_delay

    def reward(self, tm: TrafficMatrix, w: LinkWeights) -> tuple[float, float]:
        """(reward, mean delay) for routing ``tm`` with weights ``w``."""
        report = evaluate_routing(self.topology, tm, shortest_paths(self.topology, w), self.hop_delay)
        d = report.mean_delay
        if self.reward_mode == "raw":
            return delay_reward(report), d
        ref = evaluate_routing(self.topology, tm, self._reference, self.hop_delay).mean_delay
        if self.reward_mode == "relative":
            return (ref - d) / ref, d
        return float(np.log(ref / d)), d


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)
    # (step, {level: mean delay}, overall mean delay)
    evaluations: list[tuple[int, dict, float]] = field(default_factory=list)


def evaluate_agent(agent: Agent, dataset: TrafficDataset, t: Topology, hop_delay: float = 0.0) -> dict[float, list[float]]:
    """Mean delay per test matrix, one actor forward each, grouped by intensity level."""
    out: dict[float, list[float]] = {lv: [] for lv in dataset.levels}
    for rec in dataset.records:
        w = agent.weights(encode_state(rec.tm, t))
        out[rec.level].append(evaluate_routing(t, rec.tm, shortest_paths(t, w), hop_delay).mean_delay)
    return out


def _eval_entry(agent, dataset, t, hop_delay, step):
    calls = agent.actor_forward_calls
    per = evaluate_agent(agent, dataset, t, hop_delay)
    agent.actor_forward_calls = calls  # monitoring passes are not agent decisions
    means = {lv: float(np.mean(v)) for lv, v in per.items()}
    overall = float(np.mean([d for v in per.values() for d in v]))
    return step, means, overall


def train(agent: Agent, env: RoutingEnv, eval_dataset: TrafficDataset | None = None, progress=None) -> TrainingLog:
    """Run ``agent.config.total_steps`` environment steps, learning after warmup."""
    cfg = agent.config
    t = env.topology
    rng_explore = substream(cfg.seed, "explore")
    rng_buffer = substream(cfg.seed, "buffer")
    rng_traffic = substream(cfg.seed, "traffic")
    buffer = ReplayBuffer(min(cfg.replay_capacity, max(cfg.total_steps, cfg.batch_size)),
                          agent.state_dim, agent.action_dim, with_next=cfg.gamma > 0)
    result = TrainingLog()
    if eval_dataset is not None and cfg.total_steps > 0:
        result.evaluations.append(_eval_entry(agent, eval_dataset, t, env.hop_delay, 0))

    tm = env.sample_tm(rng_traffic) if cfg.total_steps > 0 else None
    for step in range(cfg.total_steps):
        eps, sig = cfg.epsilon(step), cfg.sigma(step)
        state = encode_state(tm, t)
        action = agent.act_explore(state, rng_explore, eps, sig)
        w = decode_action(action, cfg.w_min, cfg.w_max)
        r, delay = env.reward(tm, w)
        next_tm = env.sample_tm(rng_traffic)
        buffer.add(Transition(state, action, r, encode_state(next_tm, t) if cfg.gamma > 0 else None))
        tm = next_tm

        diag = None
        if step >= cfg.warmup_steps and len(buffer) >= cfg.batch_size:
            diag = train_step(agent, buffer, rng_buffer)
        agent.steps_done = step + 1

        row = {"step": step, "reward": r, "mean_delay": delay, "eval_mean_delay": None,
               "epsilon": eps, "sigma": sig, "critic_loss": diag.critic_loss if diag else None}
        done = step + 1
        if eval_dataset is not None and (done % cfg.eval_every == 0 or done == cfg.total_steps):
            entry = _eval_entry(agent, eval_dataset, t, env.hop_delay, done)
            result.evaluations.append(entry)
            row["eval_mean_delay"] = entry[2]
            log.info("step %d: eval mean delay %.4g", done, entry[2])
        result.rows.append(row)
        if progress is not None:
            progress(step, row)
    return result
