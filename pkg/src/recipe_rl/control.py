"""Discrete PI(D) controllers and the reactor temperature cascade.

The outer loop measures the reactor temperature and produces a correction
signal that two affine output maps turn into setpoints for the jacket and the
external heat exchanger (EHE). Two inner loops track those setpoints by
moving the coolant inlet temperatures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

__all__ = [
    "PidConfig",
    "PidState",
    "OutputMap",
    "CascadeConfig",
    "CascadeState",
    "pid_step",
    "pid_reset",
    "cascade_step",
    "reset",
    "with_outer",
]


@dataclass(frozen=True)
class PidConfig:
    K_P: float = 0.0
    K_I: float = 0.0  # [1/s]
    K_D: float = 0.0  # [s]
    setpoint: float = 0.0
    u_ss: float = 0.0
    output_min: float = -math.inf
    output_max: float = math.inf

    def __post_init__(self):
        if not self.output_min < self.output_max:
            raise ValueError(f"output_min {self.output_min} must be below output_max {self.output_max}")

    def integral_bounds(self) -> tuple[float, float]:
        """Range of the stored integral that keeps u_ss + K_I*integral inside the box."""
        if self.K_I == 0.0:
            return -math.inf, math.inf
        a = (self.output_min - self.u_ss) / self.K_I
        b = (self.output_max - self.u_ss) / self.K_I
        return (a, b) if a <= b else (b, a)


class PidState(NamedTuple):
    integral: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False


def pid_reset() -> PidState:
    return PidState()


def pid_step(cfg: PidConfig, st: PidState, measurement: float, dt: float) -> tuple[float, PidState]:
    """One controller update; error is ``measurement - setpoint``.

    The integral is clamped (anti-windup) so that its contribution never
    pushes the output past the saturation box on its own.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    e = measurement - cfg.setpoint
    integral = st.integral + e * dt
    lo, hi = cfg.integral_bounds()
    integral = min(max(integral, lo), hi)
    de = (e - st.prev_error) / dt if st.initialized else 0.0
    u = cfg.u_ss + cfg.K_P * e + cfg.K_I * integral + cfg.K_D * de
    u = min(max(u, cfg.output_min), cfg.output_max)
    return u, PidState(integral, e, True)


@dataclass(frozen=True)
class OutputMap:
    """Affine map ``clamp(u_ss + scale * v)`` from the outer signal to a setpoint."""

    u_ss: float
    scale: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"output map box [{self.lo}, {self.hi}] is empty")

    def __call__(self, v: float) -> float:
        return min(max(self.u_ss + self.scale * v, self.lo), self.hi)


@dataclass(frozen=True)
class CascadeConfig:
    outer: PidConfig  # measures T_R, emits the shared correction signal
    jacket_map: OutputMap  # correction -> T_J setpoint
    ehe_map: OutputMap  # correction -> T_EHE setpoint
    jacket: PidConfig  # measures T_J, emits T_J_in
    ehe: PidConfig  # measures T_EHE, emits T_CW_EHE_in
    inner_period: float = 30.0  # [s]
    outer_period: float = 120.0  # [s]

    def __post_init__(self):
        if not 0 < self.inner_period <= self.outer_period:
            raise ValueError("need 0 < inner_period <= outer_period")
        ratio = self.outer_period / self.inner_period
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("outer_period must be an integer multiple of inner_period")

    @property
    def ratio(self) -> int:
        return int(round(self.outer_period / self.inner_period))

    @classmethod
    def from_dict(cls, kv: dict[str, float]) -> "CascadeConfig":
        def pid(prefix):
            return PidConfig(
                K_P=kv[prefix + "K_P"],
                K_I=kv[prefix + "K_I"],
                K_D=kv.get(prefix + "K_D", 0.0),
                setpoint=kv.get(prefix + "setpoint", 0.0),
                u_ss=kv.get(prefix + "u_ss", 0.0),
                output_min=kv.get(prefix + "output_min", -math.inf),
                output_max=kv.get(prefix + "output_max", math.inf),
            )

        def omap(prefix):
            return OutputMap(kv[prefix + "u_ss"], kv[prefix + "scale"], kv[prefix + "min"], kv[prefix + "max"])

        return cls(
            outer=pid("outer_"),
            jacket_map=omap("jacket_set_"),
            ehe_map=omap("ehe_set_"),
            jacket=pid("jacket_"),
            ehe=pid("ehe_"),
            inner_period=kv.get("inner_period", 30.0),
            outer_period=kv.get("outer_period", 120.0),
        )


class CascadeState(NamedTuple):
    outer: PidState
    jacket: PidState
    ehe: PidState
    T_J_set: float
    T_EHE_set: float
    tick: int


def reset(cfg: CascadeConfig) -> CascadeState:
    """Fresh cascade state: zero integrals, setpoints at the maps' u_ss."""
    return CascadeState(PidState(), PidState(), PidState(), cfg.jacket_map(0.0), cfg.ehe_map(0.0), 0)


def with_outer(cfg: CascadeConfig, *, K_P: float, K_I: float, setpoint: float) -> CascadeConfig:
    """Inject recipe-supplied outer-loop gains and reactor-temperature setpoint."""
    return replace(cfg, outer=replace(cfg.outer, K_P=K_P, K_I=K_I, setpoint=setpoint))


def cascade_step(cfg: CascadeConfig, st: CascadeState, x, dt_inner: float) -> tuple[float, float, CascadeState]:
    """Advance the cascade by one inner period.

    ``x`` is anything with ``T_R``, ``T_J`` and ``T_EHE`` attributes. The outer
    loop runs on the first call and then every ``cfg.ratio`` calls.
    Returns ``(T_J_in, T_CW_EHE_in, new_state)``.
    """
    if abs(dt_inner - cfg.inner_period) > 1e-9:
        raise ValueError(f"dt_inner {dt_inner} does not match inner period {cfg.inner_period}")
    outer, T_J_set, T_EHE_set = st.outer, st.T_J_set, st.T_EHE_set
    if st.tick % cfg.ratio == 0:
        v, outer = pid_step(cfg.outer, outer, x.T_R, cfg.outer_period)
        T_J_set = cfg.jacket_map(v)
        T_EHE_set = cfg.ehe_map(v)
    T_J_in, jacket = pid_step(replace(cfg.jacket, setpoint=T_J_set), st.jacket, x.T_J, dt_inner)
    T_CW_in, ehe = pid_step(replace(cfg.ehe, setpoint=T_EHE_set), st.ehe, x.T_EHE, dt_inner)
    return T_J_in, T_CW_in, CascadeState(outer, jacket, ehe, T_J_set, T_EHE_set, st.tick + 1)
