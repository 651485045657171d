"""Recipe-based reinforcement learning for a semi-batch polymerization reactor.

The agent chooses operation-recipe and PID parameters phase by phase instead of
driving the plant inputs directly. Modules:

- :mod:`~recipe_rl.reactor` plant model and RK4 integration
- :mod:`~recipe_rl.control` PID law and the temperature cascade
- :mod:`~recipe_rl.recipe` three-phase recipe executor
- :mod:`~recipe_rl.envs` recipe and direct-control environments
- :mod:`~recipe_rl.neural` numpy MLPs and Adam
- :mod:`~recipe_rl.trainer` TD3 and cross-entropy training
- :mod:`~recipe_rl.harness` seeded evaluation and grid runs
"""

from .envs import DirectEnv, FixedRecipePolicy, RecipeEnv, RewardConfig, make_env
from .harness import EvalMetrics, GridSpec, evaluate, run_grid
from .neural import Adam, Mlp
from .reactor import ControlInput, ModelParameters, PhysicalState, integrate
from .recipe import ExpertBoxes, PlantSetup, RecipeParameters, baseline_recipe, run_recipe
from .trainer import CemConfig, Td3Config, cem_train, td3_train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CemConfig",
    "ControlInput",
    "DirectEnv",
    "EvalMetrics",
    "ExpertBoxes",
    "FixedRecipePolicy",
    "GridSpec",
    "Mlp",
    "ModelParameters",
    "PhysicalState",
    "PlantSetup",
    "RecipeEnv",
    "RecipeParameters",
    "RewardConfig",
    "Td3Config",
    "baseline_recipe",
    "cem_train",
    "evaluate",
    "integrate",
    "make_env",
    "run_grid",
    "run_recipe",
    "td3_train",
]
