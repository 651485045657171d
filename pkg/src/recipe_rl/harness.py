"""Seeded evaluation of policies and the hyperparameter grid runner.

Evaluation seeds are ``base + 1 ... base + n`` with ``base >= 10**6``, which
keeps them apart from training seeds (all below ``10**6``). Violations are
counted per control interval and per violated constraint.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .config import write_json
from .envs import make_env
from .neural import Mlp
from .reactor import SECONDS_PER_HOUR, write_trajectory_csv
from .trainer import CemConfig, Td3Config, TRAIN_SEED_LIMIT, cem_train, rollout, td3_train

__all__ = [
    "EVAL_SEED_BASE",
    "EpisodeRecord",
    "EvalMetrics",
    "GridSpec",
    "GridCell",
    "GridRow",
    "evaluate",
    "run_episode",
    "train_cell",
    "run_grid",
    "rank_rows",
    "read_episode_csv",
    "write_transitions_csv",
    "GRID_COLUMNS",
]

log = logging.getLogger(__name__)

EVAL_SEED_BASE = TRAIN_SEED_LIMIT
EPISODE_COLUMNS = ("seed", "scenario", "return", "batch_time_s", "n_cv", "n_intervals", "n_cv_rel", "terminated", "truncated")
GRID_COLUMNS = (
    "cell_id", "algorithm", "arch", "batch", "lr", "noise", "buffer", "scenario", "seed",
    "mean_t_batch_h", "std_t_batch_h", "mean_ncv", "mean_ncv_rel", "completion_rate",
)  # fmt: skip


@dataclass(frozen=True)
class EpisodeRecord:
    seed: int
    scenario: str
    ret: float
    batch_time_s: float
    n_cv: int
    n_intervals: int
    terminated: bool
    truncated: bool

    def summary(self) -> dict:
        return {
            "seed": self.seed, "scenario": self.scenario, "return": self.ret, "batch_time_s": self.batch_time_s,
            "n_cv": self.n_cv, "n_cv_rel": self.n_cv_rel, "terminated": self.terminated, "truncated": self.truncated,
        }  # fmt: skip

    @property
    def n_cv_rel(self) -> float:
        """Violations per visited 30 s state, in percent."""
        return 100.0 * self.n_cv / self.n_intervals if self.n_intervals else 0.0

    def row(self) -> list:
        return [self.seed, self.scenario, repr(self.ret), repr(self.batch_time_s), self.n_cv, self.n_intervals,
                repr(self.n_cv_rel), int(self.terminated), int(self.truncated)]  # fmt: skip


def _mean_std(v) -> tuple[float, float]:
    a = np.asarray(v, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


@dataclass(frozen=True)
class EvalMetrics:
    n_episodes: int
    mean_t_batch_h: float
    std_t_batch_h: float
    mean_ncv: float
    std_ncv: float
    mean_ncv_rel: float
    std_ncv_rel: float
    completion_rate: float

    @classmethod
    def from_records(cls, records: Sequence[EpisodeRecord]) -> "EvalMetrics":
        if not records:
            raise ValueError("no episodes to aggregate")
        t = _mean_std([r.batch_time_s / SECONDS_PER_HOUR for r in records])
        n = _mean_std([r.n_cv for r in records])
        rel = _mean_std([r.n_cv_rel for r in records])
        done = sum(r.terminated and not r.truncated for r in records) / len(records)
        return cls(len(records), *t, *n, *rel, done)

    def to_dict(self) -> dict:
        return asdict(self)


def run_episode(policy: Callable, env, seed: int, transitions: list | None = None) -> EpisodeRecord:
    """Roll out one episode; optionally collects its transitions into ``transitions``."""
    recs = rollout(env, policy, seed)
    if transitions is not None:
        transitions.extend(recs)
    return EpisodeRecord(
        seed=int(seed),
        scenario=env.reward_cfg.scenario,
        ret=math.fsum(t.r for t in recs),
        batch_time_s=float(env.batch_time),
        n_cv=int(sum(env.log.violations)),
        n_intervals=len(env.log.violations),
        terminated=bool(env.terminated),
        truncated=bool(env.truncated),
    )


def _episode_rows(env):
    lg, dt = env.log, env.setup.control_interval
    for i, (x, u, nv) in enumerate(zip(lg.states[1:], lg.inputs, lg.violations)):
        yield ((i + 1) * dt, x, u, nv, repr(lg.interval_rewards[i]), *lg.phases[i])


def write_transitions_csv(path, transitions) -> None:
    """Flattened transition records: ``s_*, a_*, r, s_next_*, terminated, truncated``."""
    if not transitions:
        return
    ns, na = len(transitions[0].s), len(transitions[0].a)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"s_{i}" for i in range(ns)] + [f"a_{i}" for i in range(na)] + ["r"]
                   + [f"s_next_{i}" for i in range(ns)] + ["terminated", "truncated"])  # fmt: skip
        for t in transitions:
            w.writerow([*map(repr, map(float, t.s)), *map(repr, map(float, t.a)), repr(float(t.r)),
                        *map(repr, map(float, t.s_next)), int(t.terminated), int(t.truncated)])  # fmt: skip


def _eval_one(args):
    policy, env, seed, out_dir = args
    transitions: list = []
    rec = run_episode(policy, env, seed, transitions)
    if out_dir is not None:
        out = Path(out_dir)
        write_trajectory_csv(
            out / f"episode_{seed}.csv",
            _episode_rows(env),
            extra_columns=("reward", "phase", "step_c", "exit_reason"),
        )
        write_transitions_csv(out / f"transitions_{seed}.csv", transitions)
        write_json(out / f"episode_{seed}.json", rec.summary())
    return rec


def evaluate(
    policy: Callable,
    env,
    n_episodes: int = 10,
    base_seed: int = EVAL_SEED_BASE,
    out_dir: str | os.PathLike | None = None,
    workers: int = 1,
) -> tuple[EvalMetrics, list[EpisodeRecord]]:
    """Run ``policy`` from seeds ``base_seed + 1 ... base_seed + n_episodes``.

    With ``out_dir`` set, writes one trajectory CSV per episode plus
    ``episodes.csv`` and ``metrics.json``. Results do not depend on ``workers``.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    if base_seed < EVAL_SEED_BASE:
        raise ValueError(f"evaluation seeds must start at or above {EVAL_SEED_BASE}")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(policy, env, base_seed + 1 + i, out_dir) for i in range(n_episodes)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            records = list(ex.map(_eval_one, jobs))
    else:
        records = [_eval_one(j) for j in jobs]
    metrics = EvalMetrics.from_records(records)
    if out_dir is not None:
        with open(Path(out_dir) / "episodes.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(EPISODE_COLUMNS)
            w.writerows(r.row() for r in records)
        write_json(Path(out_dir) / "metrics.json", metrics.to_dict())
    return metrics, records


def read_episode_csv(path: str | os.PathLike) -> tuple[float, int, int]:
    """Batch time [s], violation count and interval count recomputed from a trajectory CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return 0.0, 0, 0
    return float(rows[-1]["t_s"]), sum(int(r["n_violations"]) for r in rows), len(rows)


# -- grid ---------------------------------------------------------------------------

ARCHS = ((50, 50), (50, 25, 10))


@dataclass(frozen=True)
class GridSpec:
    algorithm: str = "TD3"
    archs: tuple[tuple[int, ...], ...] = ARCHS
    batch_sizes: tuple[int, ...] = (512, 4096)
    lrs: tuple[float, ...] = (3e-4, 1e-5)
    noises: tuple[float, ...] = (0.0, 0.1)
    buffers: tuple[int, ...] = (1_000_000, 100_000, 10_000)
    scenarios: tuple[int, ...] = (1, 2, 3)
    env_kind: str = "recipe"
    base_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ("TD3", "CEM"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        for name in ("archs", "batch_sizes", "lrs", "noises", "buffers", "scenarios"):
            v = getattr(self, name)
            if len(v) == 0:
                raise ValueError(f"{name} must not be empty")
            if len(set(v)) != len(v):
                raise ValueError(f"{name} contains duplicates")

    def cells(self) -> list["GridCell"]:
        """Deterministic cross product; CEM ignores the gradient-specific axes."""
        if self.algorithm == "TD3":
            combos = itertools.product(self.scenarios, self.archs, self.batch_sizes, self.lrs, self.noises, self.buffers)
        else:
            combos = ((s, a, None, None, None, None) for s, a in itertools.product(self.scenarios, self.archs))
        return [
            GridCell(f"{self.algorithm.lower()}-{k:03d}", self.algorithm, tuple(a), b, lr, nz, buf, s, self.base_seed + k)
            for k, (s, a, b, lr, nz, buf) in enumerate(combos)
        ]

    def to_dict(self) -> dict:
        return asdict(self)


class GridCell(NamedTuple):
    cell_id: str
    algorithm: str
    arch: tuple[int, ...]
    batch: int | None
    lr: float | None
    noise: float | None
    buffer: int | None
    scenario: int
    seed: int


@dataclass
class GridRow:
    cell: GridCell
    metrics: EvalMetrics | None
    error: str = ""

    def csv_row(self) -> list:
        c = self.cell
        opt = lambda v: "" if v is None else v  # noqa: E731
        head = [c.cell_id, c.algorithm, "-".join(map(str, c.arch)), opt(c.batch), opt(c.lr), opt(c.noise),
                opt(c.buffer), c.scenario, c.seed]  # fmt: skip
        if self.metrics is None:
            return head + ["nan"] * 5
        m = self.metrics
        return head + [repr(m.mean_t_batch_h), repr(m.std_t_batch_h), repr(m.mean_ncv), repr(m.mean_ncv_rel),
                       repr(m.completion_rate)]  # fmt: skip


def rank_rows(rows: Sequence[GridRow]) -> list[GridRow]:
    """Completion rate desc, then relative violations asc, then batch time asc; failed cells last."""

    def key(r: GridRow):
        if r.metrics is None:
            return (1, 0.0, 0.0, 0.0, r.cell.cell_id)
        m = r.metrics
        return (0, -m.completion_rate, m.mean_ncv_rel, m.mean_t_batch_h, r.cell.cell_id)

    return sorted(rows, key=key)


@dataclass
class CellBudget:
    episodes: int = 300  # training episode-equivalents per cell
    cem_population: int = 10
    cem_episodes_per_candidate: int = 3
    eval_episodes: int = 10
    eval_base_seed: int = EVAL_SEED_BASE
    direct_episode_steps: int = 600  # 5 h at 30 s

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("budget must be at least one episode")


def train_cell(cell: GridCell, env_kind: str, budget: CellBudget, run_dir: Path | None = None) -> tuple[Mlp, object]:
    """Train one grid cell; returns the policy and its learning curve."""

    def factory():
        return make_env(env_kind, cell.scenario)

    if cell.algorithm == "TD3":
        per_ep = 14 if env_kind == "recipe" else budget.direct_episode_steps
        steps = budget.episodes * per_ep
        cfg = Td3Config(
            actor_hidden=cell.arch,
            critic_hidden=cell.arch,
            lr=cell.lr,
            batch_size=cell.batch,
            buffer_size=max(cell.buffer, cell.batch),
            expl_noise=cell.noise,
            warmup=min(1000, steps // 2),
            eval_every=max(1, 50 * per_ep),
        )
        policy, curve = td3_train(factory, cfg, steps, seed=cell.seed)
    else:
        per_gen = budget.cem_population * budget.cem_episodes_per_candidate
        cfg = CemConfig(
            hidden=cell.arch,
            population=budget.cem_population,
            episodes_per_candidate=budget.cem_episodes_per_candidate,
            generations=max(1, budget.episodes // per_gen),
        )
        policy, curve = cem_train(factory, cfg, seed=cell.seed)
    if run_dir is not None:
        write_json(run_dir / "config.json", {"cell": cell._asdict(), "env": env_kind, "trainer": cfg.to_dict()})
    return policy, curve


def _run_cell(args):
    cell, env_kind, budget, out_dir = args
    cdir = Path(out_dir) / "cells" / cell.cell_id
    done = cdir / "metrics.json"
    if done.exists():
        m = json.loads(done.read_text(encoding="utf-8"))
        return GridRow(cell, EvalMetrics(**m))
    cdir.mkdir(parents=True, exist_ok=True)
    try:
        policy, curve = train_cell(cell, env_kind, budget, cdir)
        policy.save(cdir / "weights.json")
        curve.to_csv(cdir / "curve.csv")
        env = make_env(env_kind, cell.scenario)
        metrics, _ = evaluate(policy, env, budget.eval_episodes, budget.eval_base_seed, cdir / "eval")
        write_json(done, metrics.to_dict())  # written last: marks the cell complete
        return GridRow(cell, metrics)
    except Exception as exc:  # a failing cell must not abort the grid
        log.warning("cell %s failed: %s", cell.cell_id, exc)
        (cdir / "error.txt").write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        return GridRow(cell, None, f"{type(exc).__name__}: {exc}")


def run_grid(
    spec: GridSpec,
    budget: CellBudget,
    out_dir: str | os.PathLike,
    workers: int = 1,
    cells: Sequence[GridCell] | None = None,
) -> list[GridRow]:
    """Train and evaluate every cell, then write ``results.csv`` in ranked order.

    Cells that already have ``metrics.json`` on disk are loaded, not retrained.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = spec.cells() if cells is None else list(cells)
    jobs = [(c, spec.env_kind, budget, out) for c in cells]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]
    ranked = rank_rows(rows)
    with open(out / "results.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(GRID_COLUMNS)
        w.writerows(r.csv_row() for r in ranked)
    errors = {r.cell.cell_id: r.error for r in rows if r.error}
    write_json(out / "errors.json", errors)
    return ranked
