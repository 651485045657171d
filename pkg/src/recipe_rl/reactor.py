"""Semi-batch polymerization reactor: dynamics, integrator and constraints.

The model has ten states (component masses, five temperatures, accumulated
feed and adiabatic temperature) and three inputs (feed rate and the two
coolant inlet temperatures). The model's own time unit is the hour; the
public stepping functions take durations in seconds.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, fields
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .config import ConfigError, data_path, load_kv

__all__ = [
    "PhysicalState",
    "ControlInput",
    "ModelParameters",
    "InitialConditionRanges",
    "ConstraintReport",
    "SimulationFault",
    "UndefinedConversion",
    "STATE_NAMES",
    "INPUT_NAMES",
    "CONSTRAINT_NAMES",
    "TRAJECTORY_COLUMNS",
    "make_input",
    "rk4_step",
    "rk4_solve",
    "count_violations",
    "rhs",
    "step",
    "integrate",
    "check_constraints",
    "conversion",
    "total_mass",
    "adiabatic_temperature",
    "validate_state",
    "sample_initial_state",
    "write_trajectory_csv",
]

SECONDS_PER_HOUR = 3600.0
T_PLAUSIBLE_MIN = 273.15
T_PLAUSIBLE_MAX = 500.0
DEFAULT_DT_INT = 1.0  # [s]


class PhysicalState(NamedTuple):
    m_W: float
    m_M: float
    m_P: float
    T_R: float
    T_S: float
    T_J: float
    T_EHE: float
    T_CW_EHE: float
    m_acc: float
    T_ad: float


class ControlInput(NamedTuple):
    m_dot_feed: float  # [kg/h]
    T_J_in: float  # [K]
    T_CW_EHE_in: float  # [K]


STATE_NAMES = PhysicalState._fields
INPUT_NAMES = ControlInput._fields
CONSTRAINT_NAMES = ("T_R_low", "T_R_high", "T_ad_high", "m_acc_high")
TRAJECTORY_COLUMNS = ("t_s",) + STATE_NAMES + INPUT_NAMES + ("n_violations",)
_TEMPERATURES = ("T_R", "T_S", "T_J", "T_EHE", "T_CW_EHE", "T_ad")
_MASSES = ("m_W", "m_M", "m_P", "m_acc")


class SimulationFault(RuntimeError):
    """Non-finite or physically implausible simulation state."""

    def __init__(self, message: str, state: str | None = None):
        super().__init__(message)
        self.state = state


class UndefinedConversion(ValueError):
    pass


@dataclass(frozen=True)
class ModelParameters:
    R: float
    T_F: float
    E_a: float
    delH_R: float
    A_tank: float
    k_0: float
    k_U1: float
    k_U2: float
    w_WF: float
    w_AF: float
    m_jacket_coolant: float
    f_jacket_coolant: float
    m_ehe_coolant: float
    f_ehe_coolant: float
    m_ehe_product: float
    f_ehe_product: float
    m_steel: float
    c_pW: float
    c_pS: float
    c_pF: float
    c_pR: float
    k_WS: float
    k_AS: float
    k_PS: float
    alpha_ehe: float
    p_ehe_reaction: float
    T_R_min: float
    T_R_max: float
    T_ad_max: float
    m_acc_max: float
    m_dot_feed_min: float
    m_dot_feed_max: float
    T_J_in_min: float
    T_J_in_max: float
    T_CW_EHE_in_min: float
    T_CW_EHE_in_max: float
    version: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ConfigError(f"model parameter {f.name} is not finite")
            if f.name.endswith(("_min", "_max")) or f.name == "version":
                continue
            if v <= 0:
                raise ConfigError(f"model parameter {f.name} must be positive, got {v}")
        for lo, hi in self._box_pairs():
            if getattr(self, lo) >= getattr(self, hi):
                raise ConfigError(f"{lo} must be below {hi}")

    @staticmethod
    def _box_pairs():
        return [
            ("T_R_min", "T_R_max"),
            ("m_dot_feed_min", "m_dot_feed_max"),
            ("T_J_in_min", "T_J_in_max"),
            ("T_CW_EHE_in_min", "T_CW_EHE_in_max"),
        ]

    @classmethod
    def from_dict(cls, values: dict[str, float]) -> "ModelParameters":
        names = {f.name for f in fields(cls)}
        missing = names - set(values) - {"version"}
        if missing:
            raise ConfigError(f"missing model parameters: {', '.join(sorted(missing))}")
        unknown = set(values) - names
        if unknown:
            raise ConfigError(f"unknown model parameters: {', '.join(sorted(unknown))}")
        kw = dict(values)
        if "version" in kw:
            kw["version"] = int(kw["version"])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> "ModelParameters":
        return cls.from_dict(load_kv(path if path is not None else data_path("reactor_params.txt")))

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def input_low(self) -> ControlInput:
        return ControlInput(self.m_dot_feed_min, self.T_J_in_min, self.T_CW_EHE_in_min)

    @property
    def input_high(self) -> ControlInput:
        return ControlInput(self.m_dot_feed_max, self.T_J_in_max, self.T_CW_EHE_in_max)


@dataclass(frozen=True)
class InitialConditionRanges:
    """Uniform sampling box for the free initial states."""

    m_W: tuple[float, float]
    m_M: tuple[float, float]
    T_R: tuple[float, float]
    T_S: tuple[float, float]
    T_J: tuple[float, float]
    T_EHE: tuple[float, float]
    T_CW_EHE: tuple[float, float]

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not lo <= hi:
                raise ConfigError(f"initial-condition range for {f.name} is empty: [{lo}, {hi}]")
        if self.m_M[0] <= 0:
            raise ConfigError("initial monomer mass must be positive")

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> "InitialConditionRanges":
        kv = load_kv(path if path is not None else data_path("initial_conditions.txt"))
        try:
            return cls(**{f.name: (kv[f.name + "_min"], kv[f.name + "_max"]) for f in fields(cls)})
        except KeyError as exc:
            raise ConfigError(f"missing initial-condition key {exc.args[0]}") from None

    @classmethod
    def point(cls, x: PhysicalState) -> "InitialConditionRanges":
        return cls(**{f.name: (getattr(x, f.name),) * 2 for f in fields(cls)})

    def nominal(self, p: ModelParameters) -> PhysicalState:
        mid = {f.name: 0.5 * sum(getattr(self, f.name)) for f in fields(self)}
        return _initial_state(mid, p)

    def to_dict(self) -> dict[str, float]:
        out = {}
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            out[f.name + "_min"] = lo
            out[f.name + "_max"] = hi
        return out


@dataclass(frozen=True)
class ConstraintReport:
    slack: tuple[float, ...]  # g_i, same units as the bounded quantity
    violated: tuple[bool, ...]

    @property
    def count(self) -> int:
        return sum(self.violated)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(CONSTRAINT_NAMES, self.slack))


def make_input(p: ModelParameters, m_dot_feed: float, T_J_in: float, T_CW_EHE_in: float) -> ControlInput:
    """Build a ControlInput, rejecting values outside the actuator box."""
    u = ControlInput(float(m_dot_feed), float(T_J_in), float(T_CW_EHE_in))
    _check_input(u, p)
    return u


def _check_input(u: Sequence[float], p: ModelParameters) -> None:
    for name, v, lo, hi in zip(INPUT_NAMES, u, p.input_low, p.input_high):
        if not lo <= v <= hi:
            raise ValueError(f"{name} = {v} outside actuator box [{lo}, {hi}]")


def _constants(p: ModelParameters) -> tuple:
    return (
        p.E_a / p.R,
        p.k_0,
        p.k_U1,
        p.k_U2,
        p.w_WF,
        p.w_AF,
        p.T_F,
        p.delH_R,
        p.A_tank,
        p.k_WS,
        p.k_AS,
        p.k_PS,
        p.c_pR,
        p.c_pF,
        p.c_pS * p.m_steel,
        p.c_pW * p.m_jacket_coolant,
        p.f_jacket_coolant * p.c_pW,
        p.c_pR * p.m_ehe_product,
        p.f_ehe_product * p.c_pR,
        p.alpha_ehe,
        p.c_pW * p.m_ehe_coolant,
        p.f_ehe_coolant * p.c_pW,
        p.m_ehe_product,
        p.p_ehe_reaction,
    )


def _deriv(x, u, c):
    m_W, m_M, m_P, T_R, T_S, T_J, T_EHE, T_CW, _m_acc, _T_ad = x
    feed, T_J_in, T_CW_in = u
    (E_over_R, k_0, k_U1, k_U2, w_WF, w_AF, T_F, dH, A, k_WS, k_AS, k_PS, c_pR, c_pF,
     C_steel, C_jacket, F_jacket, C_ehe, F_ehe, alpha, C_cw, F_cw, m_ehe, p_ehe) = c

    U = m_P / (m_M + m_P)
    m_tot = m_W + m_M + m_P
    rate_factor = k_0 * (k_U1 * (1.0 - U) + k_U2 * U)
    k_R1 = rate_factor * math.exp(-E_over_R / T_R)
    k_R2 = rate_factor * math.exp(-E_over_R / T_EHE)
    k_K = (m_W * k_WS + m_M * k_AS + m_P * k_PS) / m_tot
    r_vessel = k_R1 * (m_M - m_M * m_ehe / m_tot)
    r_ehe = p_ehe * k_R2 * (m_M / m_tot) * m_ehe

    dm_W = feed * w_WF
    dm_M = feed * w_AF - r_vessel - r_ehe
    dm_P = r_vessel + r_ehe
    q_wall = k_K * A * (T_R - T_S)
    q_jacket = k_K * A * (T_S - T_J)
    q_loop = F_ehe * (T_R - T_EHE)
    q_ehe = alpha * (T_EHE - T_CW)
    dT_R = (feed * c_pF * (T_F - T_R) - q_wall - q_loop + dH * r_vessel) / (c_pR * m_tot)
    dT_S = (q_wall - q_jacket) / C_steel
    dT_J = (F_jacket * (T_J_in - T_J) + q_jacket) / C_jacket
    dT_EHE = (q_loop - q_ehe + dH * r_ehe) / C_ehe
    dT_CW = (F_cw * (T_CW_in - T_CW) + q_ehe) / C_cw
    dT_ad = (dH / (m_tot * c_pR)) * dm_M - (dm_M + dm_W + dm_P) * (m_M * dH / (m_tot * m_tot * c_pR)) + dT_R
    return (dm_W, dm_M, dm_P, dT_R, dT_S, dT_J, dT_EHE, dT_CW, feed, dT_ad)


def _raise_nonfinite(values, names=STATE_NAMES, what="derivative"):
    bad = [n for n, v in zip(names, values) if not math.isfinite(v)]
    raise SimulationFault(f"non-finite {what} of {', '.join(bad)}", state=bad[0] if bad else None)


def rhs(x: PhysicalState, u: ControlInput, p: ModelParameters) -> PhysicalState:
    """Time derivative of the state, per hour (the model's time unit)."""
    try:
        d = _deriv(x, u, _constants(p))
    except (ZeroDivisionError, OverflowError) as exc:
        raise SimulationFault(f"derivative evaluation failed: {exc}") from None
    if not math.isfinite(sum(d)):
        _raise_nonfinite(d)
    return PhysicalState._make(d)


def rk4_step(f: Callable, x: Sequence[float], h: float) -> tuple:
    """One classical fourth-order Runge-Kutta step of an autonomous ODE ``x' = f(x)``."""
    k1 = f(x)
    hh = 0.5 * h
    k2 = f([a + hh * b for a, b in zip(x, k1)])
    k3 = f([a + hh * b for a, b in zip(x, k2)])
    k4 = f([a + h * b for a, b in zip(x, k3)])
    h6 = h / 6.0
    return tuple(a + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4))


def rk4_solve(f: Callable, x0: Sequence[float], t_end: float, n_steps: int) -> tuple:
    """Integrate ``x' = f(x)`` from 0 to ``t_end`` with ``n_steps`` equal RK4 steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    x, h = tuple(x0), t_end / n_steps
    for _ in range(n_steps):
        x = rk4_step(f, x, h)
    return x


def _rk4(x, u, h, c):
    return rk4_step(lambda s: _deriv(s, u, c), x, h)


def _check_plausible(x) -> None:
    for name, v in zip(STATE_NAMES, x):
        if not math.isfinite(v):
            raise SimulationFault(f"state {name} became non-finite", state=name)
    for name in _TEMPERATURES:
        v = x[STATE_NAMES.index(name)]
        if not T_PLAUSIBLE_MIN <= v <= T_PLAUSIBLE_MAX:
            raise SimulationFault(f"{name} = {v:.2f} K left the plausible range", state=name)


def step(x: PhysicalState, u: ControlInput, dt: float, p: ModelParameters) -> PhysicalState:
    """One classical RK4 step of ``dt`` seconds with ``u`` held constant."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_input(u, p)
    try:
        out = _rk4(tuple(x), tuple(u), dt / SECONDS_PER_HOUR, _constants(p))
    except (ZeroDivisionError, OverflowError) as exc:
        raise SimulationFault(f"derivative evaluation failed: {exc}") from None
    _check_plausible(out)
    return PhysicalState._make(out)


def integrate(
    x: PhysicalState,
    u: ControlInput,
    duration: float,
    p: ModelParameters,
    dt_int: float = DEFAULT_DT_INT,
) -> PhysicalState:
    """Hold ``u`` for ``duration`` seconds using RK4 substeps of ``dt_int``."""
    n = int(round(duration / dt_int))
    if n < 1 or abs(n * dt_int - duration) > 1e-9 * duration:
        raise ValueError(f"duration {duration} s is not a positive multiple of dt_int {dt_int} s")
    _check_input(u, p)
    c = _constants(p)
    h = dt_int / SECONDS_PER_HOUR
    xs = tuple(x)
    us = tuple(u)
    try:
        for _ in range(n):
            xs = _rk4(xs, us, h, c)
    except (ZeroDivisionError, OverflowError) as exc:
        raise SimulationFault(f"derivative evaluation failed: {exc}") from None
    _check_plausible(xs)
    return PhysicalState._make(xs)


def check_constraints(x: PhysicalState, u: ControlInput | None, p: ModelParameters) -> ConstraintReport:
    """Process-constraint slacks in the ``g <= 0`` convention.

    ``u`` is accepted for interface symmetry; none of the shipped constraints
    depend on the input.
    """
    slack = (
        p.T_R_min - x.T_R,
        x.T_R - p.T_R_max,
        x.T_ad - p.T_ad_max,
        x.m_acc - p.m_acc_max,
    )
    return ConstraintReport(slack=slack, violated=tuple(g > 0 for g in slack))


def count_violations(x, p: ModelParameters) -> int:
    """Fast path of ``check_constraints(x, None, p).count``."""
    T_R = x[3]
    return (T_R < p.T_R_min) + (T_R > p.T_R_max) + (x[9] > p.T_ad_max) + (x[8] > p.m_acc_max)


def conversion(x: PhysicalState) -> float:
    """Fraction of fed monomer already turned into product."""
    denom = x.m_P + x.m_M
    if not denom > 0:
        raise UndefinedConversion("conversion undefined: no monomer and no product")
    return x.m_P / denom


def total_mass(x: PhysicalState) -> float:
    return x.m_W + x.m_M + x.m_P


def adiabatic_temperature(x: PhysicalState, p: ModelParameters) -> float:
    """Algebraic adiabatic temperature of the current reactor contents."""
    return x.m_M * p.delH_R / (total_mass(x) * p.c_pR) + x.T_R


def validate_state(x: PhysicalState) -> None:
    """Raise SimulationFault if ``x`` violates the physical plausibility guards."""
    for name in _MASSES:
        if getattr(x, name) < 0:
            raise SimulationFault(f"{name} is negative", state=name)
    _check_plausible(x)


def _initial_state(v: dict[str, float], p: ModelParameters) -> PhysicalState:
    m_tot = v["m_W"] + v["m_M"]
    T_ad = v["m_M"] * p.delH_R / (m_tot * p.c_pR) + v["T_R"]
    return PhysicalState(v["m_W"], v["m_M"], 0.0, v["T_R"], v["T_S"], v["T_J"], v["T_EHE"], v["T_CW_EHE"], 0.0, T_ad)


def sample_initial_state(
    rng: np.random.Generator, ranges: InitialConditionRanges, p: ModelParameters
) -> PhysicalState:
    """Draw a start state uniformly from ``ranges``; m_P = m_acc = 0."""
    v = {}
    for f in fields(ranges):
        lo, hi = getattr(ranges, f.name)
        v[f.name] = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return _initial_state(v, p)


def write_trajectory_csv(
    path: str | os.PathLike,
    rows: Iterable[tuple],
    extra_columns: Sequence[str] = (),
) -> None:
    """Write ``(t_s, x, u, n_violations, *extra)`` rows as a trajectory CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS + tuple(extra_columns))
        for t, x, u, nv, *extra in rows:
            w.writerow([repr(float(t)), *map(repr, map(float, x)), *map(repr, map(float, u)), int(nv), *extra])
