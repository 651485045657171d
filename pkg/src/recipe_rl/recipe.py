"""Parameterized operation recipe for the polymerization reactor.

Three batch phases, fourteen parameters. Each phase is a run of ``set`` steps
followed by one ``condition`` step; executing the condition step runs the
plant under the cascade controller until the phase exit predicate holds.

========  =====  =========  ==============================================
phase     step   kind       meaning
========  =====  =========  ==============================================
1         1      set        feed ramp slope [kg/h^2]
1         2-4    set        outer T_R setpoint [K], K_P [-], K_I [1/s]
1         5      condition  run until total mass reaches theta_5 [kg]
2         6      set        feed ramp slope [kg/h^2]
2         7-9    set        outer T_R setpoint, K_P, K_I
2         10     set        feed cap [kg/h]
2         11     condition  run until phase time >= theta_11 [s] or feed >= cap
3         12-14  set        close feed; outer T_R setpoint, K_P, K_I
========  =====  =========  ==============================================
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .config import ConfigError, data_path, load_kv
from .control import CascadeConfig, CascadeState, PidState, cascade_step, reset, with_outer
from .reactor import (
    ControlInput,
    ModelParameters,
    PhysicalState,
    SECONDS_PER_HOUR,
    DEFAULT_DT_INT,
    conversion,
    count_violations,
    integrate,
    total_mass,
    write_trajectory_csv,
)

__all__ = [
    "N_PARAMS",
    "PHASE_FINAL_STEPS",
    "PARAM_NAMES",
    "RecipeStep",
    "RECIPE_PROGRAM",
    "ExpertBoxes",
    "RecipeParameters",
    "PlantSetup",
    "PhaseTrace",
    "PhaseCarry",
    "RecipeOrderError",
    "apply_set_step",
    "phase_of_step",
    "run_phase",
    "run_recipe",
    "baseline_recipe",
    "write_phase_csv",
]

N_PARAMS = 14
PHASE_FINAL_STEPS = (5, 11, 14)
PARAM_NAMES = (
    "feed_slope_1",
    "T_R_set_1",
    "K_P_1",
    "K_I_1",
    "mass_threshold",
    "feed_slope_2",
    "T_R_set_2",
    "K_P_2",
    "K_I_2",
    "feed_cap",
    "phase2_time_limit",
    "T_R_set_3",
    "K_P_3",
    "K_I_3",
)


class RecipeStep(NamedTuple):
    c: int
    phase: int
    kind: str  # "set" | "condition"
    target: str
    description: str


RECIPE_PROGRAM: tuple[RecipeStep, ...] = (
    RecipeStep(1, 1, "set", "feed_slope", "set slope of feed ramp"),
    RecipeStep(2, 1, "set", "setpoint", "set T_R setpoint of outer controller"),
    RecipeStep(3, 1, "set", "K_P", "set K_P of outer controller"),
    RecipeStep(4, 1, "set", "K_I", "set K_I of outer controller"),
    RecipeStep(5, 1, "condition", "mass_threshold", "run phase 1 until total mass reaches threshold"),
    RecipeStep(6, 2, "set", "feed_slope", "set slope of feed ramp"),
    RecipeStep(7, 2, "set", "setpoint", "set T_R setpoint of outer controller"),
    RecipeStep(8, 2, "set", "K_P", "set K_P of outer controller"),
    RecipeStep(9, 2, "set", "K_I", "set K_I of outer controller"),
    RecipeStep(10, 2, "set", "feed_cap", "set maximal feed rate"),
    RecipeStep(11, 2, "condition", "time_limit", "run phase 2 until time limit or feed cap"),
    RecipeStep(12, 3, "set", "setpoint", "close feed, set T_R setpoint of outer controller"),
    RecipeStep(13, 3, "set", "K_P", "set K_P of outer controller"),
    RecipeStep(14, 3, "set", "K_I", "set K_I of outer controller"),
)

# 0-based indices of (setpoint, K_P, K_I) per phase
_PID_INDEX = {1: (1, 2, 3), 2: (6, 7, 8), 3: (11, 12, 13)}


class RecipeOrderError(RuntimeError):
    """Recipe parameters assigned out of order."""


def phase_of_step(c: int) -> int:
    return RECIPE_PROGRAM[c - 1].phase


@dataclass(frozen=True)
class ExpertBoxes:
    """Certified admissible interval per recipe parameter."""

    low: tuple[float, ...]
    high: tuple[float, ...]

    def __post_init__(self):
        if len(self.low) != N_PARAMS or len(self.high) != N_PARAMS:
            raise ConfigError(f"expert boxes need {N_PARAMS} entries")
        for name, lo, hi in zip(PARAM_NAMES, self.low, self.high):
            if not lo < hi:
                raise ConfigError(f"expert box for {name} is empty: [{lo}, {hi}]")

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> "ExpertBoxes":
        kv = load_kv(path if path is not None else data_path("expert_boxes.txt"))
        try:
            return cls(
                tuple(kv[n + "_min"] for n in PARAM_NAMES),
                tuple(kv[n + "_max"] for n in PARAM_NAMES),
            )
        except KeyError as exc:
            raise ConfigError(f"missing expert-box key {exc.args[0]}") from None

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.low) + np.asarray(self.high))

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.high) - np.asarray(self.low))

    def clip(self, c: int, value: float) -> float:
        return min(max(float(value), self.low[c - 1]), self.high[c - 1])

    def from_action(self, c: int, a: float) -> float:
        """Affine map of a normalized action in [-1, 1] onto box c."""
        a = min(max(float(a), -1.0), 1.0)
        lo, hi = self.low[c - 1], self.high[c - 1]
        return lo + 0.5 * (a + 1.0) * (hi - lo)

    def to_action(self, c: int, value: float) -> float:
        lo, hi = self.low[c - 1], self.high[c - 1]
        return 2.0 * (float(value) - lo) / (hi - lo) - 1.0

    def contains(self, c: int, value: float) -> bool:
        return self.low[c - 1] <= value <= self.high[c - 1]

    def to_dict(self) -> dict[str, float]:
        out = {}
        for n, lo, hi in zip(PARAM_NAMES, self.low, self.high):
            out[n + "_min"] = lo
            out[n + "_max"] = hi
        return out


@dataclass(frozen=True)
class RecipeParameters:
    """The ordered parameter vector; unset entries hold 0."""

    theta: tuple[float, ...] = (0.0,) * N_PARAMS
    n_set: int = 0

    @property
    def set_mask(self) -> tuple[bool, ...]:
        return tuple(i < self.n_set for i in range(N_PARAMS))

    @property
    def next_step(self) -> int:
        return self.n_set + 1

    @property
    def complete(self) -> bool:
        return self.n_set == N_PARAMS

    def __getitem__(self, c: int) -> float:
        """1-based access, matching the step numbering."""
        if not 1 <= c <= self.n_set:
            raise RecipeOrderError(f"theta_{c} has not been set")
        return self.theta[c - 1]

    @classmethod
    def full(cls, values: Sequence[float]) -> "RecipeParameters":
        values = tuple(float(v) for v in values)
        if len(values) != N_PARAMS:
            raise ValueError(f"need {N_PARAMS} values, got {len(values)}")
        return cls(values, N_PARAMS)

    def as_dict(self) -> dict[str, float]:
        return {n: v for n, v, s in zip(PARAM_NAMES, self.theta, self.set_mask) if s}


def apply_set_step(
    theta: RecipeParameters, c: int, value: float, boxes: ExpertBoxes | None = None
) -> RecipeParameters:
    """Assign parameter ``c`` (1-based), which must be the lowest unset index.

    With ``boxes`` given the value is clamped into the expert box first.
    """
    if c != theta.n_set + 1:
        raise RecipeOrderError(f"cannot set theta_{c}: next unset parameter is theta_{theta.n_set + 1}")
    if boxes is not None:
        value = boxes.clip(c, value)
    values = list(theta.theta)
    values[c - 1] = values[c - 1] + float(value)
    return RecipeParameters(tuple(values), theta.n_set + 1)


@dataclass(frozen=True)
class PlantSetup:
    """Everything a phase run needs besides the state and the recipe."""

    params: ModelParameters
    cascade: CascadeConfig
    control_interval: float = 30.0  # [s]
    dt_int: float = DEFAULT_DT_INT  # [s]
    t_max: float = 5 * SECONDS_PER_HOUR  # [s]
    conversion_target: float = 0.99

    @classmethod
    def default(cls, **overrides) -> "PlantSetup":
        return cls(ModelParameters.load(), CascadeConfig.from_dict(load_kv(data_path("cascade.txt"))), **overrides)


@dataclass
class PhaseTrace:
    phase: int
    t_start: float  # global batch clock at phase start [s]
    setpoint: float  # outer T_R setpoint used in this phase [K]
    states: list[PhysicalState] = field(default_factory=list)  # n_end + 1 entries
    inputs: list[ControlInput] = field(default_factory=list)
    violations: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    exit_reason: str = ""
    converged: bool = False
    truncated: bool = False
    carry: "PhaseCarry | None" = None
    interval: float = 30.0  # control interval [s]

    @property
    def n_end(self) -> int:
        return len(self.inputs)

    @property
    def elapsed(self) -> float:
        return self.t_end - self.t_start

    @property
    def t_end(self) -> float:
        return self.t_start + self.interval * self.n_end



# reward(x, u, u_prev, x_next, dt, T_R_set) -> float
RewardFn = Callable[[PhysicalState, ControlInput, "ControlInput | None", PhysicalState, float, float], float]


class PhaseCarry(NamedTuple):
    """What one phase hands to the next besides the physical state."""

    feed: float = 0.0  # last commanded feed [kg/h]
    u_prev: ControlInput | None = None
    cascade: CascadeState | None = None


def run_phase(
    x: PhysicalState,
    theta: RecipeParameters,
    z: int,
    clock: float,
    setup: PlantSetup,
    carry: PhaseCarry = PhaseCarry(),
    reward: RewardFn | None = None,
) -> tuple[PhaseTrace, PhysicalState]:
    """Simulate batch phase ``z`` in control intervals until its exit predicate holds.

    ``clock`` is the global batch time at phase start [s]. The outer
    controller integral restarts from zero because its gains and setpoint
    change here; the inner loops keep their state from ``carry``.
    """
    final = PHASE_FINAL_STEPS[z - 1]
    if theta.n_set < final:
        raise RecipeOrderError(f"phase {z} needs theta_1..theta_{final} set, only {theta.n_set} are")
    p = setup.params
    dt = setup.control_interval
    dt_h = dt / SECONDS_PER_HOUR
    i_sp, i_kp, i_ki = _PID_INDEX[z]
    th = theta.theta
    setpoint = th[i_sp]
    cfg = with_outer(setup.cascade, K_P=th[i_kp], K_I=th[i_ki], setpoint=setpoint)
    cst = reset(cfg) if carry.cascade is None else carry.cascade._replace(outer=PidState(), tick=0)
    feed, u_prev = carry.feed, carry.u_prev

    if z == 1:
        slope, cap = th[0], p.m_dot_feed_max
    elif z == 2:
        slope, cap = th[5], min(th[9], p.m_dot_feed_max)
    else:
        slope, cap, feed = 0.0, 0.0, 0.0

    trace = PhaseTrace(phase=z, t_start=clock, setpoint=setpoint, interval=dt)
    trace.states.append(x)
    n = 0
    while True:
        t_phase = n * dt
        t_now = clock + t_phase
        if z == 3 and conversion(x) >= setup.conversion_target:
            trace.exit_reason, trace.converged = "converged", True
            break
        if t_now >= setup.t_max - 1e-9:
            trace.exit_reason, trace.truncated = "truncated", True
            break
        if z == 1 and total_mass(x) >= th[4]:
            trace.exit_reason = "mass-threshold"
            break
        if z == 2:
            if feed >= th[9]:
                trace.exit_reason = "feed-cap"
                break
            if t_phase >= th[10]:
                trace.exit_reason = "time-limit"
                break

        if z != 3:
            feed = min(max(feed + slope * dt_h, p.m_dot_feed_min), cap)
        T_J_in, T_CW_in, cst = cascade_step(cfg, cst, x, dt)
        u = ControlInput(feed, T_J_in, T_CW_in)
        x_next = integrate(x, u, dt, p, setup.dt_int)
        trace.inputs.append(u)
        trace.states.append(x_next)
        trace.violations.append(count_violations(x_next, p))
        if reward is not None:
            trace.rewards.append(reward(x, u, u_prev, x_next, dt, setpoint))
        u_prev = u
        x = x_next
        n += 1

    trace.carry = PhaseCarry(feed, u_prev, cst)
    return trace, x


def run_recipe(
    x0: PhysicalState,
    theta: RecipeParameters,
    setup: PlantSetup,
    reward: RewardFn | None = None,
) -> list[PhaseTrace]:
    """Execute all three phases of a complete recipe."""
    if not theta.complete:
        raise RecipeOrderError("run_recipe needs all parameters set")
    traces = []
    x, clock, carry = x0, 0.0, PhaseCarry()
    for z in (1, 2, 3):
        tr, x = run_phase(x, theta, z, clock, setup, carry=carry, reward=reward)
        traces.append(tr)
        clock, carry = tr.t_end, tr.carry
    return traces


def baseline_recipe(path: str | os.PathLike | None = None) -> RecipeParameters:
    """The fixed, hand-tuned recipe used as the non-adaptive baseline."""
    kv = load_kv(path if path is not None else data_path("baseline_recipe.txt"))
    try:
        return RecipeParameters.full([kv[n] for n in PARAM_NAMES])
    except KeyError as exc:
        raise ConfigError(f"baseline recipe is missing {exc.args[0]}") from None


def write_phase_csv(path: str | os.PathLike, traces: Sequence[PhaseTrace]) -> None:
    """Trajectory CSV with extra ``phase,step_c,exit_reason`` columns."""
    rows = []
    for tr in traces:
        c = PHASE_FINAL_STEPS[tr.phase - 1]
        for i, u in enumerate(tr.inputs):
            reason = tr.exit_reason if i == tr.n_end - 1 else ""
            rows.append((tr.t_start + (i + 1) * tr.interval, tr.states[i + 1], u, tr.violations[i], tr.phase, c, reason))
    write_trajectory_csv(path, rows, extra_columns=("phase", "step_c", "exit_reason"))
