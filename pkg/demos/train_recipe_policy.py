"""Train a linear recipe policy with the cross-entropy method and compare it to the baseline.

Takes about a minute on one core. Run with ``python3 demos/train_recipe_policy.py``.
"""

# %% Baseline on the evaluation seeds
import numpy as np

from recipe_rl import CemConfig, ExpertBoxes, FixedRecipePolicy, baseline_recipe, cem_train, evaluate, make_env

boxes = ExpertBoxes.load()
env = make_env("recipe", "minimize_t")
base, _ = evaluate(FixedRecipePolicy(baseline_recipe(), boxes), env, n_episodes=10)
print(f"baseline: {base.mean_t_batch_h:.3f} +- {base.std_t_batch_h:.3f} h, violations {base.mean_ncv:.1f}")

# %% 10 generations of 10 candidates, 3 training episodes each (300 episodes)
cfg = CemConfig(hidden=(), population=10, generations=10, episodes_per_candidate=3)
policy, curve = cem_train(lambda: make_env("recipe", "minimize_t"), cfg, seed=0)
for p in curve.points[::3]:
    print(f"{p.steps:5d} env steps: return {p.mean_return:.4f}")

# %% Held-out evaluation
learned, records = evaluate(policy, env, n_episodes=10)
gain = 100 * (1 - learned.mean_t_batch_h / base.mean_t_batch_h)
print(f"policy:   {learned.mean_t_batch_h:.3f} +- {learned.std_t_batch_h:.3f} h ({gain:.0f} % faster)")
print("violations per episode:", [r.n_cv for r in records])

# %% What the policy chose for the first evaluation seed
obs = env.reset(seed=records[0].seed)
while not env.done:
    obs = env.step(policy(obs)).s_next
print("learned recipe:", np.round(env.observation.theta.theta, 4))
