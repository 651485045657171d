"""The direct environment: the agent sets the three plant inputs every 30 s.

Contrasts two constant policies. With no feed the initial monomer converges
in about half an hour. A trickle of feed never reaches the conversion target
and is cut off at 5 h.
"""

# %% Two constant action sequences
import numpy as np

from recipe_rl import make_env
from recipe_rl.reactor import conversion

env = make_env("direct", "minimize_t")
for name, a in (("no feed", [-1.0, 0.0, 0.0]), ("trickle feed", [-0.9, 0.0, 0.0])):
    env.reset(seed=3)
    ret = 0.0
    while not env.done:
        ret += env.step(np.array(a)).r
    print(
        f"{name:<13} {env.batch_time / 3600:5.2f} h, conversion {conversion(env.x):.4f},"
        f" terminated {env.terminated}, truncated {env.truncated}, return {ret:.3f}"
    )

# %% Mapping between actions and physical inputs
u = env.action_to_input([0.0, 0.0, 0.0])
print("centre of the action box:", u)
print("round trip:", env.input_to_action(u))
