"""Episodic environments over the reactor.

``RecipeEnv`` lets an agent fill in the 14 recipe parameters one at a time;
the plant only moves when a phase's last parameter arrives. ``DirectEnv`` is
the conventional setup in which the agent sets all three physical inputs
every control interval. Both return :class:`TransitionRecord` from ``step``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .reactor import (
    ControlInput,
    InitialConditionRanges,
    ModelParameters,
    PhysicalState,
    SECONDS_PER_HOUR,
    check_constraints,
    conversion,
    count_violations,
    integrate,
    sample_initial_state,
)
from .recipe import (
    N_PARAMS,
    PHASE_FINAL_STEPS,
    ExpertBoxes,
    PhaseCarry,
    PhaseTrace,
    PlantSetup,
    RecipeParameters,
    apply_set_step,
    phase_of_step,
    run_phase,
)

__all__ = [
    "SCENARIOS",
    "RewardConfig",
    "TransitionRecord",
    "EpisodeFinished",
    "StateScaler",
    "RecipeObservation",
    "classical_reward",
    "RecipeEnv",
    "DirectEnv",
    "FixedRecipePolicy",
    "make_env",
]

SCENARIOS = ("maximize_mP", "minimize_t", "hybrid")


class EpisodeFinished(RuntimeError):
    """``step`` called on an episode that already ended."""


@dataclass(frozen=True)
class RewardConfig:
    scenario: str = "hybrid"
    w_mP: float = 1.0 / 30000.0  # [1/kg]
    w_t: float = 1.0 / 3600.0  # [1/s]
    lambda_cv: float = 10.0  # per violated constraint per interval
    lambda_du: float = 0.1  # per squared normalized input step
    lambda_track: float = 1e-4  # [1/K^2]
    gamma: float = 0.99
    cv_mode: str = "count"  # or "magnitude": sum of positive slacks
    track_in_direct: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        for name in ("w_mP", "w_t", "lambda_cv", "lambda_du", "lambda_track"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.cv_mode not in ("count", "magnitude"):
            raise ValueError(f"unknown cv_mode {self.cv_mode!r}")

    @classmethod
    def for_scenario(cls, scenario: int | str, **kw) -> "RewardConfig":
        if isinstance(scenario, int) or str(scenario).isdigit():
            k = int(scenario)
            if not 1 <= k <= len(SCENARIOS):
                raise ValueError(f"scenario number must be 1..{len(SCENARIOS)}, got {k}")
            scenario = SCENARIOS[k - 1]
        return cls(scenario=scenario, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def classical_reward(
    x: PhysicalState,
    u: ControlInput,
    u_prev: ControlInput | None,
    x_next: PhysicalState,
    dt: float,
    cfg: RewardConfig,
    p: ModelParameters,
    T_R_set: float | None = None,
) -> float:
    """Per-interval reward: objective minus violation, smoothness and tracking penalties."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    gain = cfg.w_mP * (x_next.m_P - x.m_P)
    if cfg.scenario == "maximize_mP":
        r = gain
    elif cfg.scenario == "minimize_t":
        r = -cfg.w_t * dt
    else:
        r = gain - cfg.w_t * dt

    if cfg.cv_mode == "count":
        r -= cfg.lambda_cv * count_violations(x_next, p)
    else:
        r -= cfg.lambda_cv * sum(max(g, 0.0) for g in check_constraints(x_next, u, p).slack)

    if u_prev is not None and cfg.lambda_du > 0:
        du2 = 0.0
        for a, b, lo, hi in zip(u, u_prev, p.input_low, p.input_high):
            du2 += ((a - b) / (hi - lo)) ** 2
        r -= cfg.lambda_du * du2
    if T_R_set is not None:
        r -= cfg.lambda_track * (x_next.T_R - T_R_set) ** 2
    return r


class TransitionRecord(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    terminated: bool
    truncated: bool
    info: dict


@dataclass(frozen=True)
class StateScaler:
    """Affine map of physical states (and time) onto roughly [-1, 1]."""

    low: tuple[float, ...] = (0.0, 0.0, 0.0, 333.15, 333.15, 333.15, 293.15, 293.15, 0.0, 333.15)
    high: tuple[float, ...] = (25000.0, 3000.0, 30000.0, 393.15, 393.15, 393.15, 393.15, 393.15, 35000.0, 413.15)

    def normalize(self, x) -> np.ndarray:
        lo, hi = np.asarray(self.low), np.asarray(self.high)
        return 2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0

    def denormalize(self, v) -> PhysicalState:
        lo, hi = np.asarray(self.low), np.asarray(self.high)
        return PhysicalState._make(float(a) for a in lo + 0.5 * (np.asarray(v) + 1.0) * (hi - lo))


@dataclass(frozen=True)
class RecipeObservation:
    """Recipe-MDP state: plant state, parameters so far, next step, batch clock."""

    x: PhysicalState
    theta: RecipeParameters
    c: int
    t: float  # [s]

    SIZE = 10 + 2 * N_PARAMS + 2

    def vector(self, scaler: StateScaler, boxes: ExpertBoxes, t_max: float) -> np.ndarray:
        """Fixed-width policy input; unset parameters sit at their box midpoint."""
        th = np.asarray(self.theta.theta)
        mask = np.asarray(self.theta.set_mask, dtype=float)
        th_n = np.where(mask > 0, (th - boxes.mid) / boxes.half_width, 0.0)
        c_n = 2.0 * (self.c - 1) / (N_PARAMS - 1) - 1.0 if self.c <= N_PARAMS else 1.0 + 2.0 / (N_PARAMS - 1)
        t_n = 2.0 * self.t / t_max - 1.0
        return np.concatenate([scaler.normalize(self.x), th_n, mask, [c_n, t_n]])

    @classmethod
    def from_vector(cls, v, scaler: StateScaler, boxes: ExpertBoxes, t_max: float) -> "RecipeObservation":
        v = np.asarray(v, dtype=float)
        x = scaler.denormalize(v[:10])
        mask = v[10 + N_PARAMS : 10 + 2 * N_PARAMS] > 0.5
        n_set = int(mask.sum())
        th = np.where(mask, boxes.mid + v[10 : 10 + N_PARAMS] * boxes.half_width, 0.0)
        c = int(round((v[-2] + 1.0) * (N_PARAMS - 1) / 2.0)) + 1
        t = (v[-1] + 1.0) * t_max / 2.0
        return cls(x, RecipeParameters(tuple(float(a) for a in th), n_set), c, float(t))


def decode_step(v) -> int:
    """Step counter c encoded in a recipe observation vector."""
    return int(round((float(v[-2]) + 1.0) * (N_PARAMS - 1) / 2.0)) + 1


@dataclass
class _EpisodeLog:
    """Everything the harness needs to score an episode."""

    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    interval_rewards: list = field(default_factory=list)  # r_cl * dt_weight per interval
    phases: list = field(default_factory=list)  # (phase, step_c, exit_reason) per interval


class RecipeEnv:
    """Agent supplies one normalized recipe parameter per step (14 steps per episode)."""

    action_dim = 1
    obs_dim = RecipeObservation.SIZE
    kind = "recipe"

    def __init__(
        self,
        setup: PlantSetup | None = None,
        boxes: ExpertBoxes | None = None,
        ranges: InitialConditionRanges | None = None,
        reward: RewardConfig | None = None,
        scaler: StateScaler | None = None,
    ):
        self.setup = setup or PlantSetup.default()
        self.boxes = boxes or ExpertBoxes.load()
        self.ranges = ranges or InitialConditionRanges.load()
        self.reward_cfg = reward or RewardConfig()
        self.scaler = scaler or StateScaler()
        self.dt_weight = self.setup.control_interval / SECONDS_PER_HOUR
        self._obs: RecipeObservation | None = None
        self.done = True

    def _vec(self, obs: RecipeObservation) -> np.ndarray:
        return obs.vector(self.scaler, self.boxes, self.setup.t_max)

    @property
    def observation(self) -> RecipeObservation:
        return self._obs

    def reset(self, seed: int | None = None, x0: PhysicalState | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if x0 is None:
            x0 = sample_initial_state(rng, self.ranges, self.setup.params)
        self._obs = RecipeObservation(x0, RecipeParameters(), 1, 0.0)
        self._carry = PhaseCarry()
        self.traces: list[PhaseTrace] = []
        self.log = _EpisodeLog(states=[x0])
        self.done = False
        self.terminated = self.truncated = False
        return self._vec(self._obs)

    def _reward_fn(self):
        cfg, p = self.reward_cfg, self.setup.params

        def fn(x, u, u_prev, x_next, dt, T_R_set):
            return classical_reward(x, u, u_prev, x_next, dt, cfg, p, T_R_set)

        return fn

    def step(self, action) -> TransitionRecord:
        if self.done:
            raise EpisodeFinished("episode is over; call reset()")
        a = np.atleast_1d(np.asarray(action, dtype=float))
        obs = self._obs
        c = obs.c
        value = self.boxes.from_action(c, a[0])
        theta = apply_set_step(obs.theta, c, value, self.boxes)
        x, t, r = obs.x, obs.t, 0.0
        info = {"c": c, "value": value, "x": obs.x}
        if c in PHASE_FINAL_STEPS:
            z = phase_of_step(c)
            tr, x = run_phase(x, theta, z, t, self.setup, carry=self._carry, reward=self._reward_fn())
            self._carry = tr.carry
            self.traces.append(tr)
            weighted = [rc * self.dt_weight for rc in tr.rewards]
            r = math.fsum(weighted)
            t = tr.t_end
            self.log.states.extend(tr.states[1:])
            self.log.inputs.extend(tr.inputs)
            self.log.violations.extend(tr.violations)
            self.log.interval_rewards.extend(weighted)
            self.log.phases.extend([(z, c, "")] * tr.n_end)
            if tr.n_end:
                self.log.phases[-1] = (z, c, tr.exit_reason)
            info["trace"] = tr
            if z == 3:
                self.done = True
                self.terminated, self.truncated = tr.converged, tr.truncated
        info["x_next"] = x
        s = self._vec(obs)
        self._obs = RecipeObservation(x, theta, c + 1, t)
        return TransitionRecord(s, a, r, self._vec(self._obs), self.terminated, self.truncated, info)

    @property
    def batch_time(self) -> float:
        return self._obs.t


class DirectEnv:
    """Agent sets (feed, T_J_in, T_CW_EHE_in) every control interval."""

    action_dim = 3
    obs_dim = 11
    kind = "direct"

    def __init__(
        self,
        setup: PlantSetup | None = None,
        ranges: InitialConditionRanges | None = None,
        reward: RewardConfig | None = None,
        scaler: StateScaler | None = None,
        T_R_set: float | None = None,
    ):
        self.setup = setup or PlantSetup.default()
        self.ranges = ranges or InitialConditionRanges.load()
        self.reward_cfg = reward or RewardConfig()
        self.scaler = scaler or StateScaler()
        p = self.setup.params
        self.T_R_set = T_R_set if T_R_set is not None else 0.5 * (p.T_R_min + p.T_R_max)
        self.dt_weight = self.setup.control_interval / SECONDS_PER_HOUR
        self.done = True

    def _vec(self) -> np.ndarray:
        return np.concatenate([self.scaler.normalize(self.x), [2.0 * self.t / self.setup.t_max - 1.0]])

    def action_to_input(self, a) -> ControlInput:
        p = self.setup.params
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        return ControlInput._make(
            lo + 0.5 * (float(ai) + 1.0) * (hi - lo) for ai, lo, hi in zip(a, p.input_low, p.input_high)
        )

    def input_to_action(self, u) -> np.ndarray:
        p = self.setup.params
        return np.array([2.0 * (ui - lo) / (hi - lo) - 1.0 for ui, lo, hi in zip(u, p.input_low, p.input_high)])

    def reset(self, seed: int | None = None, x0: PhysicalState | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.x = x0 if x0 is not None else sample_initial_state(rng, self.ranges, self.setup.params)
        self.t = 0.0
        self.u_prev: ControlInput | None = None
        self.log = _EpisodeLog(states=[self.x])
        self.done = False
        self.terminated = self.truncated = False
        return self._vec()

    def step(self, action) -> TransitionRecord:
        if self.done:
            raise EpisodeFinished("episode is over; call reset()")
        a = np.asarray(action, dtype=float).reshape(3)
        s = self._vec()
        u = self.action_to_input(a)
        dt = self.setup.control_interval
        x = self.x
        x_next = integrate(x, u, dt, self.setup.params, self.setup.dt_int)
        T_set = self.T_R_set if self.reward_cfg.track_in_direct else None
        r = classical_reward(x, u, self.u_prev, x_next, dt, self.reward_cfg, self.setup.params, T_set) * self.dt_weight
        nv = count_violations(x_next, self.setup.params)
        self.x, self.t, self.u_prev = x_next, self.t + dt, u
        self.log.states.append(x_next)
        self.log.inputs.append(u)
        self.log.violations.append(nv)
        self.log.interval_rewards.append(r)
        self.log.phases.append((0, 0, ""))
        self.terminated = conversion(x_next) >= self.setup.conversion_target
        self.truncated = not self.terminated and self.t >= self.setup.t_max - 1e-9
        self.done = self.terminated or self.truncated
        info = {"x": x, "x_next": x_next, "u": u}
        return TransitionRecord(s, a, r, self._vec(), self.terminated, self.truncated, info)

    @property
    def batch_time(self) -> float:
        return self.t


class FixedRecipePolicy:
    """Replays a complete recipe through the recipe environment's action interface."""

    def __init__(self, theta: RecipeParameters, boxes: ExpertBoxes):
        if not theta.complete:
            raise ValueError("FixedRecipePolicy needs a complete recipe")
        self.actions = [boxes.to_action(c, theta[c]) for c in range(1, N_PARAMS + 1)]

    def __call__(self, obs) -> np.ndarray:
        return np.array([self.actions[decode_step(obs) - 1]])


def make_env(kind: str, scenario: int | str = 3, **kw):
    """Build a ``"recipe"`` or ``"direct"`` environment for a reward scenario."""
    reward = kw.pop("reward", None) or RewardConfig.for_scenario(scenario)
    if kind == "recipe":
        return RecipeEnv(reward=reward, **kw)
    if kind == "direct":
        return DirectEnv(reward=reward, **kw)
    raise ValueError(f"unknown environment kind {kind!r}")
