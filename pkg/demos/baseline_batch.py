"""Walk one batch through the hand-tuned baseline recipe.

Run with ``python3 demos/baseline_batch.py``. Cells are marked with ``# %%``
so the file also opens as a notebook in most editors.
"""

# %% Plant, recipe and a start state
import numpy as np

from recipe_rl import PlantSetup, baseline_recipe, run_recipe
from recipe_rl.reactor import InitialConditionRanges, conversion, sample_initial_state

setup = PlantSetup.default()
theta = baseline_recipe()
x0 = sample_initial_state(np.random.default_rng(1), InitialConditionRanges.load(), setup.params)
print("recipe parameters:", np.round(theta.theta, 4))
print(f"start: m_M {x0.m_M:.1f} kg, T_R {x0.T_R:.2f} K")

# %% Run the three phases
traces = run_recipe(x0, theta, setup)
for tr in traces:
    x = tr.states[-1]
    print(
        f"phase {tr.phase}: {tr.elapsed / 60:6.1f} min, exit {tr.exit_reason:<14}"
        f" m_acc {x.m_acc:8.0f} kg, conversion {conversion(x):.4f}"
    )

# %% Temperature envelope and totals
T_R = np.array([s.T_R for tr in traces for s in tr.states])
n_cv = sum(v for tr in traces for v in tr.violations)
print(f"T_R range {T_R.min():.2f} .. {T_R.max():.2f} K (bounds {setup.params.T_R_min} .. {setup.params.T_R_max})")
print(f"batch time {traces[-1].t_end / 3600:.3f} h, violations {n_cv}")
