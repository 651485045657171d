"""Policy optimizers: TD3 actor-critic and a cross-entropy-method reference.

Both work against any environment with ``reset(seed) -> obs`` and
``step(action) -> TransitionRecord`` plus ``obs_dim``/``action_dim``
attributes, and both log a learning curve of noise-free evaluation returns
against environment steps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .envs import TransitionRecord
from .neural import Adam, Mlp, backward, forward

__all__ = [
    "TRAIN_SEED_LIMIT",
    "CURVE_SEED_BASE",
    "ReplayBuffer",
    "Td3Config",
    "CemConfig",
    "CemHistory",
    "LearningCurve",
    "TrainingDiverged",
    "Td3Agent",
    "BanditEnv",
    "ZeroRewardEnv",
    "rollout",
    "discounted_return",
    "bellman_values",
    "soft_return_estimate",
    "td3_train",
    "cem_train",
]

log = logging.getLogger(__name__)

# training episodes draw seeds below this value; evaluation seeds start at it
TRAIN_SEED_LIMIT = 1_000_000
# learning-curve rollouts use their own range, clear of final evaluation seeds
CURVE_SEED_BASE = 2_000_000


class TrainingDiverged(RuntimeError):
    pass


class BanditEnv:
    """One-step task with reward ``-(a - target)^2``."""

    obs_dim = 1
    action_dim = 1
    kind = "bandit"

    def __init__(self, target: float = 0.5):
        self.target = target
        self.done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.done = False
        return np.ones(1)

    def step(self, action) -> TransitionRecord:
        a = np.atleast_1d(np.asarray(action, dtype=float))
        self.done = True
        r = -float((a[0] - self.target) ** 2)
        return TransitionRecord(np.ones(1), a, r, np.ones(1), True, False, {})


class ZeroRewardEnv:
    """Fixed-length episodes with zero reward everywhere."""

    obs_dim = 1
    action_dim = 1
    kind = "zero"

    def __init__(self, length: int = 5):
        self.length = length

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.k = 0
        return np.zeros(1)

    def step(self, action) -> TransitionRecord:
        self.k += 1
        end = self.k >= self.length
        return TransitionRecord(np.zeros(1), np.atleast_1d(action), 0.0, np.zeros(1), end, False, {})


class ReplayBuffer:
    """Ring buffer of transitions with a seeded uniform sampler."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, obs_dim))
        self.a = np.zeros((self.capacity, action_dim))
        self.r = np.zeros(self.capacity)
        self.s2 = np.zeros((self.capacity, obs_dim))
        self.done = np.zeros(self.capacity)
        self.inserted = 0
        self.rng = rng

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, s, a, r, s2, terminated: bool) -> None:
        i = self.inserted % self.capacity
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, float(terminated)
        self.inserted += 1

    def sample_indices(self, n: int) -> np.ndarray:
        if len(self) == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.rng.integers(0, len(self), size=n)

    def sample(self, n: int):
        idx = self.sample_indices(n)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx]


class CurvePoint(NamedTuple):
    steps: int
    mean_return: float
    std_return: float


@dataclass
class LearningCurve:
    points: list[CurvePoint] = field(default_factory=list)

    def append(self, steps: int, returns: Sequence[float]) -> None:
        if self.points and steps <= self.points[-1].steps:
            raise ValueError("learning-curve steps must increase strictly")
        r = np.asarray(returns, dtype=float)
        self.points.append(CurvePoint(int(steps), float(r.mean()), float(r.std(ddof=1)) if r.size > 1 else 0.0))

    def __len__(self) -> int:
        return len(self.points)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("steps,mean_return,std_return\n")
            for p in self.points:
                fh.write(f"{p.steps},{p.mean_return!r},{p.std_return!r}\n")


def rollout(env, policy: Callable, seed: int | None = None, max_steps: int = 100_000) -> list[TransitionRecord]:
    """Run one episode with a deterministic policy."""
    obs = env.reset(seed=seed)
    out = []
    for _ in range(max_steps):
        rec = env.step(policy(obs))
        out.append(rec)
        if rec.terminated or rec.truncated:
            break
        obs = rec.s_next
    return out


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Forward sum ``sum_k gamma^k r_k``."""
    return float(sum(r * gamma**k for k, r in enumerate(rewards)))


def bellman_values(rewards: Sequence[float], gamma: float) -> list[float]:
    """State values along a rollout by backward recursion ``V_k = r_k + gamma V_{k+1}``."""
    v, out = 0.0, []
    for r in reversed(rewards):
        v = r + gamma * v
        out.append(v)
    return out[::-1]


def soft_return_estimate(policy: Callable, env, gamma: float, seeds: Sequence[int]) -> float:
    """Monte-Carlo estimate of the expected discounted return over ``seeds``."""
    if len(seeds) == 0:
        raise ValueError("need at least one seed")
    return float(np.mean([discounted_return([t.r for t in rollout(env, policy, s)], gamma) for s in seeds]))


def _eval_returns(env, policy, seeds) -> list[float]:
    return [math.fsum(t.r for t in rollout(env, policy, s)) for s in seeds]


@dataclass
class Td3Config:
    actor_hidden: tuple[int, ...] = (50, 50)
    critic_hidden: tuple[int, ...] = (50, 50)
    lr: float = 3e-4
    batch_size: int = 512
    buffer_size: int = 10_000
    expl_noise: float = 0.1
    target_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    tau: float = 0.005
    gamma: float = 0.99
    warmup: int = 1000
    eval_every: int = 700  # environment steps (50 recipe episodes)
    eval_episodes: int = 5
    curve_seed: int = CURVE_SEED_BASE

    def __post_init__(self):
        self.actor_hidden = tuple(self.actor_hidden)
        self.critic_hidden = tuple(self.critic_hidden)
        if self.batch_size > self.buffer_size:
            raise ValueError("batch_size must not exceed buffer_size")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


class Td3Agent:
    """Deterministic actor with twin critics and target networks."""

    def __init__(self, obs_dim: int, action_dim: int, cfg: Td3Config, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.actor = Mlp([obs_dim, *cfg.actor_hidden, action_dim], output="tanh", rng=rng)
        self.critics = [Mlp([obs_dim + action_dim, *cfg.critic_hidden, 1], rng=rng) for _ in range(2)]
        self.actor_t = self.actor.copy()
        self.critics_t = [q.copy() for q in self.critics]
        self.actor_opt = Adam(cfg.lr)
        self.critic_opts = [Adam(cfg.lr), Adam(cfg.lr)]
        self.n_updates = 0
        self.action_dim = action_dim

    def act(self, obs) -> np.ndarray:
        return forward(self.actor, obs)

    def critic_targets(self, r, s2, done) -> np.ndarray:
        cfg = self.cfg
        noise = np.clip(cfg.target_noise * self.rng.standard_normal((len(r), self.action_dim)), -cfg.noise_clip, cfg.noise_clip)
        a2 = np.clip(forward(self.actor_t, s2) + noise, -1.0, 1.0)
        sa2 = np.hstack([s2, a2])
        q1 = forward(self.critics_t[0], sa2)[:, 0]
        q2 = forward(self.critics_t[1], sa2)[:, 0]
        return r + cfg.gamma * (1.0 - done) * np.minimum(q1, q2)

    def update(self, batch) -> float:
        s, a, r, s2, done = batch
        n = len(r)
        y = self.critic_targets(r, s2, done)
        sa = np.hstack([s, a])
        loss = 0.0
        for q, opt in zip(self.critics, self.critic_opts):
            err = forward(q, sa)[:, 0] - y
            loss += float(np.mean(err**2))
            grads = backward(q, sa, (2.0 / n) * err[:, None])
            opt.step_net(q, grads)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"critic loss became non-finite after {self.n_updates} updates")
        self.n_updates += 1
        if self.n_updates % self.cfg.policy_delay == 0:
            a_pi = forward(self.actor, s)
            q_grad = backward(self.critics[0], np.hstack([s, a_pi]), np.full((n, 1), -1.0 / n))
            dA = q_grad.dx[:, s.shape[1] :]
            self.actor_opt.step_net(self.actor, backward(self.actor, s, dA))
            self.actor_t.soft_update(self.actor, self.cfg.tau)
            for qt, q in zip(self.critics_t, self.critics):
                qt.soft_update(q, self.cfg.tau)
        return loss


def td3_train(
    env_factory: Callable[[], object],
    cfg: Td3Config,
    total_steps: int,
    seed: int = 0,
    on_eval: Callable[[int, Td3Agent], None] | None = None,
) -> tuple[Mlp, LearningCurve]:
    """Train a TD3 agent for ``total_steps`` environment steps.

    Training episodes draw their seeds from the run generator, below
    :data:`TRAIN_SEED_LIMIT`. Curve points use seeds ``cfg.curve_seed + 1 ...``.
    """
    env, eval_env = env_factory(), env_factory()
    rng = np.random.default_rng(seed)
    agent = Td3Agent(env.obs_dim, env.action_dim, cfg, rng)
    buf = ReplayBuffer(cfg.buffer_size, env.obs_dim, env.action_dim, rng)
    curve = LearningCurve()
    eval_seeds = [cfg.curve_seed + 1 + i for i in range(cfg.eval_episodes)]

    def next_seed():
        return int(rng.integers(0, TRAIN_SEED_LIMIT))

    obs = env.reset(seed=next_seed())
    for step in range(total_steps):
        if step < cfg.warmup:
            a = rng.uniform(-1.0, 1.0, env.action_dim)
        else:
            a = agent.act(obs)
            if cfg.expl_noise > 0:
                a = a + cfg.expl_noise * rng.standard_normal(env.action_dim)
            a = np.clip(a, -1.0, 1.0)
        rec = env.step(a)
        buf.add(obs, a, rec.r, rec.s_next, rec.terminated)
        if rec.terminated or rec.truncated:
            obs = env.reset(seed=next_seed())
        else:
            obs = rec.s_next
        if step >= cfg.warmup and len(buf) >= cfg.batch_size:
            agent.update(buf.sample(cfg.batch_size))
        if (step + 1) % cfg.eval_every == 0:
            curve.append(step + 1, _eval_returns(eval_env, agent.act, eval_seeds))
            log.info("td3 step %d: mean eval return %.5g", step + 1, curve.points[-1].mean_return)
            if on_eval is not None:
                on_eval(step + 1, agent)
    if not curve.points or curve.points[-1].steps != total_steps:
        curve.append(total_steps, _eval_returns(eval_env, agent.act, eval_seeds))
    return agent.actor, curve


@dataclass
class CemConfig:
    hidden: tuple[int, ...] = ()
    population: int = 10
    elite_frac: float = 0.2
    init_std: float = 0.5
    extra_std: float = 0.1  # additive exploration noise, decays geometrically
    decay: float = 0.9
    episodes_per_candidate: int = 1
    generations: int = 30
    keep_elites: bool = True
    eval_episodes: int = 5
    curve_seed: int = CURVE_SEED_BASE

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if not 0 < self.elite_frac < 1:
            raise ValueError("elite_frac must lie in (0, 1)")
        if self.population < 2:
            raise ValueError("population must be at least 2")

    @property
    def n_elite(self) -> int:
        return max(1, int(round(self.elite_frac * self.population)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CemHistory:
    elite_mean: list[float] = field(default_factory=list)
    best: list[float] = field(default_factory=list)


def cem_train(
    env_factory: Callable[[], object],
    cfg: CemConfig,
    seed: int = 0,
    history: CemHistory | None = None,
) -> tuple[Mlp, LearningCurve]:
    """Cross-entropy search over the flat weights of a ``tanh``-headed policy.

    Every candidate is scored on the same training seeds, so scores of
    carried-over elites stay comparable between generations.
    """
    env, eval_env = env_factory(), env_factory()
    rng = np.random.default_rng(seed)
    policy = Mlp([env.obs_dim, *cfg.hidden, env.action_dim], output="tanh", rng=rng)
    mean = policy.get_flat()
    std = np.full(mean.size, cfg.init_std)
    train_seeds = [int(v) for v in rng.integers(0, TRAIN_SEED_LIMIT, cfg.episodes_per_candidate)]
    eval_seeds = [cfg.curve_seed + 1 + i for i in range(cfg.eval_episodes)]
    curve = LearningCurve()
    steps = 0
    elites = np.empty((0, mean.size))
    elite_scores = np.empty(0)
    candidate = policy.copy()

    def score(w) -> float:
        nonlocal steps
        candidate.set_flat(w)
        total = 0.0
        for s in train_seeds:
            recs = rollout(env, candidate, s)
            steps += len(recs)
            total += math.fsum(t.r for t in recs)
        return total / len(train_seeds)

    for g in range(cfg.generations):
        samples = mean + std * rng.standard_normal((cfg.population, mean.size))
        scores = np.array([score(w) for w in samples])
        if cfg.keep_elites and len(elites):
            samples = np.vstack([elites, samples])
            scores = np.concatenate([elite_scores, scores])
        order = np.argsort(-scores, kind="stable")[: cfg.n_elite]
        elites, elite_scores = samples[order], scores[order]
        extra = cfg.extra_std * cfg.decay**g
        mean = elites.mean(axis=0)
        std = np.sqrt(elites.var(axis=0) + extra**2)
        if history is not None:
            history.elite_mean.append(float(elite_scores.mean()))
            history.best.append(float(elite_scores[0]))
        policy.set_flat(mean)
        curve.append(steps, _eval_returns(eval_env, policy, eval_seeds))
        log.info("cem gen %d: elite mean %.5g, eval %.5g", g, elite_scores.mean(), curve.points[-1].mean_return)
    return policy, curve
