"""``recipe-rl`` command line: baseline, train, evaluate, grid, simulate.

Every command writes into its own run directory, starting with a frozen
``config.json`` of the fully resolved settings. Seeds resolve as command-line
flag, then the ``RECIPE_RL_SEED`` environment variable, then the config file.

Exit codes: 0 success, 1 runtime fault, 2 configuration or file error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .config import ConfigError, data_path, load_kv, read_json, write_json
from .control import CascadeConfig
from .envs import FixedRecipePolicy, RewardConfig, make_env
from .harness import EVAL_SEED_BASE, CellBudget, GridSpec, evaluate, run_grid
from .neural import Mlp, ShapeError
from .reactor import (
    InitialConditionRanges,
    ModelParameters,
    make_input,
    sample_initial_state,
    count_violations,
    integrate,
    write_trajectory_csv,
)
from .recipe import ExpertBoxes, PlantSetup, baseline_recipe
from .trainer import CemConfig, Td3Config, cem_train, td3_train

log = logging.getLogger("recipe_rl")

SEED_ENV = "RECIPE_RL_SEED"


@dataclass
class RunConfig:
    """Resolved settings of one command; frozen into ``config.json``."""

    command: str = ""
    seed: int = 0
    params: str | None = None  # model constants file, None for the shipped one
    boxes: str | None = None
    initial_conditions: str | None = None
    cascade: str | None = None
    baseline: str | None = None
    env: str = "recipe"
    scenario: int = 3
    reward: dict = field(default_factory=dict)
    algo: str = "cem"
    trainer: dict = field(default_factory=dict)
    episodes: int = 10
    eval_base_seed: int = EVAL_SEED_BASE
    weights: str | None = None
    inputs: str | None = None
    grid: dict = field(default_factory=dict)
    budget: int = 300

    @classmethod
    def from_file(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        d = read_json(path)
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"{path}: unknown keys {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _checked(fn, *args, **kw):
    """Turn validation errors of config objects into ConfigError."""
    try:
        return fn(*args, **kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def _setup(cfg: RunConfig) -> PlantSetup:
    cascade = load_kv(cfg.cascade if cfg.cascade is not None else data_path("cascade.txt"))
    return PlantSetup(ModelParameters.load(cfg.params), _checked(CascadeConfig.from_dict, cascade))


def _env(cfg: RunConfig):
    reward = _checked(RewardConfig.for_scenario, cfg.scenario, **cfg.reward)
    kw = dict(setup=_setup(cfg), ranges=InitialConditionRanges.load(cfg.initial_conditions), reward=reward)
    if cfg.env == "recipe":
        kw["boxes"] = ExpertBoxes.load(cfg.boxes)
    elif cfg.env != "direct":
        raise ConfigError(f"unknown environment kind {cfg.env!r}")
    return make_env(cfg.env, cfg.scenario, **kw)


def _prepare(cfg: RunConfig, out: str) -> Path:
    run = Path(out)
    run.mkdir(parents=True, exist_ok=True)
    write_json(run / "config.json", cfg.to_dict())
    return run


def _evaluate_into(run: Path, policy, cfg: RunConfig, workers: int):
    metrics, _ = evaluate(policy, _env(cfg), cfg.episodes, cfg.eval_base_seed, run / "episodes", workers)
    write_json(run / "metrics.json", metrics.to_dict())
    log.info(
        "t_batch %.3f +- %.3f h, n_CV %.2f, n_CV_rel %.3f %%, completed %.0f %%",
        metrics.mean_t_batch_h, metrics.std_t_batch_h, metrics.mean_ncv,
        metrics.mean_ncv_rel, 100 * metrics.completion_rate,
    )  # fmt: skip
    return metrics


def cmd_baseline(cfg: RunConfig, out: str, workers: int) -> int:
    if cfg.env != "recipe":
        raise ConfigError("the baseline recipe runs in the recipe environment only")
    theta = baseline_recipe(cfg.baseline)
    env = _env(cfg)
    run = _prepare(cfg, out)
    _evaluate_into(run, FixedRecipePolicy(theta, env.boxes), cfg, workers)
    return 0


def _trainer_config(cfg: RunConfig):
    if cfg.algo == "cem":
        return _checked(CemConfig, **cfg.trainer)
    if cfg.algo == "td3":
        return _checked(Td3Config, **{k: v for k, v in cfg.trainer.items() if k != "total_steps"})
    raise ConfigError(f"unknown algorithm {cfg.algo!r}")


def cmd_train(cfg: RunConfig, out: str, workers: int) -> int:
    tcfg = _trainer_config(cfg)
    _env(cfg)  # fail on bad files before any training starts
    run = _prepare(cfg, out)
    factory = lambda: _env(cfg)  # noqa: E731
    if cfg.algo == "cem":
        policy, curve = cem_train(factory, tcfg, seed=cfg.seed)
    else:
        steps = int(cfg.trainer.get("total_steps", 0)) or 14 * cfg.budget
        policy, curve = td3_train(factory, tcfg, steps, seed=cfg.seed)
    policy.save(run / "weights.json")
    curve.to_csv(run / "curve.csv")
    _evaluate_into(run, policy, cfg, workers)
    return 0


def cmd_evaluate(cfg: RunConfig, out: str, workers: int) -> int:
    if cfg.weights is None:
        raise ConfigError("evaluate needs --weights")
    policy = Mlp.load(cfg.weights)
    env = _env(cfg)
    want = (env.obs_dim, env.action_dim)
    got = (policy.widths[0], policy.widths[-1])
    hidden = cfg.trainer.get("hidden", cfg.trainer.get("actor_hidden"))
    if got != want or (hidden is not None and list(hidden) != policy.hidden):
        raise ShapeError(
            f"weights have arch {policy.arch}; config expects input {want[0]}, "
            f"output {want[1]}" + (f", hidden {list(hidden)}" if hidden is not None else "")
        )
    run = _prepare(cfg, out)
    _evaluate_into(run, policy, cfg, workers)
    return 0


def _parse_archs(text: str) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(w) for w in a.split("-")) for a in text.split(","))


def cmd_grid(cfg: RunConfig, out: str, workers: int) -> int:
    g = dict(cfg.grid)
    if "archs" in g:
        g["archs"] = tuple(tuple(a) for a in g["archs"])
    for k in ("batch_sizes", "lrs", "noises", "buffers", "scenarios"):
        if k in g:
            g[k] = tuple(g[k])
    g.setdefault("algorithm", cfg.algo.upper())
    g.setdefault("env_kind", cfg.env)
    g.setdefault("base_seed", cfg.seed)
    spec = _checked(GridSpec, **g)
    budget = _checked(CellBudget, episodes=cfg.budget, eval_episodes=cfg.episodes, eval_base_seed=cfg.eval_base_seed)
    run = _prepare(cfg, out)
    rows = run_grid(spec, budget, run, workers=workers)
    ok = sum(r.metrics is not None for r in rows)
    log.info("%d of %d cells succeeded", ok, len(rows))
    return 0 if ok else 1


def cmd_simulate(cfg: RunConfig, out: str, workers: int) -> int:
    """Replay a CSV of inputs (one row per control interval) through the plant."""
    if cfg.inputs is None:
        raise ConfigError("simulate needs --inputs")
    setup = _setup(cfg)
    p = setup.params
    try:
        with open(cfg.inputs, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        inputs = [_checked(make_input, p, float(r["m_dot_feed"]), float(r["T_J_in"]), float(r["T_CW_EHE_in"])) for r in rows]
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {cfg.inputs}") from None
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{cfg.inputs}: bad input row ({exc})") from None
    ranges = InitialConditionRanges.load(cfg.initial_conditions)
    x = sample_initial_state(np.random.default_rng(cfg.seed), ranges, p)
    run = _prepare(cfg, out)
    traj, t = [], 0.0
    for u in inputs:
        x = integrate(x, u, setup.control_interval, p, setup.dt_int)
        t += setup.control_interval
        traj.append((t, x, u, count_violations(x, p)))
    write_trajectory_csv(run / "trajectory.csv", traj)
    return 0


COMMANDS = {
    "baseline": cmd_baseline,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "grid": cmd_grid,
    "simulate": cmd_simulate,
}


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _ints(text):
    return tuple(int(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recipe-rl", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        sp.add_argument("--out", required=True, help="run directory")
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--params", help="model constants file")
        sp.add_argument("--initial-conditions")
        sp.add_argument("--cascade")
        sp.add_argument("--boxes")
        sp.add_argument("--scenario", type=int, choices=(1, 2, 3))
        sp.add_argument("--env", choices=("recipe", "direct"))
        sp.add_argument("--episodes", type=int, help="evaluation episodes")
        if name == "baseline":
            sp.add_argument("--recipe", dest="baseline", help="baseline recipe file")
        if name in ("train", "evaluate", "grid"):
            sp.add_argument("--algo", choices=("cem", "td3"))
            sp.add_argument("--hidden", help="hidden widths, e.g. 50,50; empty for linear")
        if name == "train":
            sp.add_argument("--generations", type=int)
            sp.add_argument("--population", type=int)
            sp.add_argument("--episodes-per-candidate", type=int)
            sp.add_argument("--steps", type=int, help="TD3 environment steps")
            sp.add_argument("--lr", type=float)
            sp.add_argument("--batch", type=int)
            sp.add_argument("--buffer", type=int)
            sp.add_argument("--noise", type=float)
            sp.add_argument("--warmup", type=int)
        if name == "evaluate":
            sp.add_argument("--weights", required=True)
        if name == "grid":
            sp.add_argument("--budget", type=int, help="training episodes per cell")
            sp.add_argument("--archs", help="e.g. 50-50,50-25-10")
            sp.add_argument("--batch-sizes", type=_ints)
            sp.add_argument("--lrs", type=_floats)
            sp.add_argument("--noises", type=_floats)
            sp.add_argument("--buffers", type=_ints)
            sp.add_argument("--scenarios", type=_ints)
        if name == "simulate":
            sp.add_argument("--inputs", required=True, help="CSV with m_dot_feed,T_J_in,T_CW_EHE_in")
    return ap


def resolve(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    """Merge config file, environment and flags (flags win)."""
    cfg = RunConfig.from_file(args.config)
    cfg.command = args.command
    if args.seed is not None:
        cfg.seed = args.seed
    elif environ.get(SEED_ENV):
        try:
            cfg.seed = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    a = vars(args)
    for key in ("params", "initial_conditions", "cascade", "boxes", "scenario", "env", "episodes", "baseline",
                "algo", "weights", "inputs", "budget"):  # fmt: skip
        if a.get(key) is not None:
            setattr(cfg, key, a[key])
    trainer = dict(cfg.trainer)
    hidden_key = "hidden" if cfg.algo == "cem" else "actor_hidden"
    if a.get("hidden") is not None:
        trainer[hidden_key] = [int(w) for w in a["hidden"].split(",") if w.strip()]
    flag_map = {
        "generations": "generations", "population": "population",
        "episodes_per_candidate": "episodes_per_candidate", "steps": "total_steps", "lr": "lr",
        "batch": "batch_size", "buffer": "buffer_size", "noise": "expl_noise", "warmup": "warmup",
    }  # fmt: skip
    for flag, key in flag_map.items():
        if a.get(flag) is not None:
            trainer[key] = a[flag]
    cfg.trainer = trainer
    grid = dict(cfg.grid)
    if a.get("archs"):
        grid["archs"] = [list(t) for t in _parse_archs(a["archs"])]
    for key in ("batch_sizes", "lrs", "noises", "buffers", "scenarios"):
        if a.get(key) is not None:
            grid[key] = list(a[key])
    cfg.grid = grid
    if cfg.episodes < 1:
        raise ConfigError("--episodes must be at least 1")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg, args.out, max(1, args.workers))
    except (ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
