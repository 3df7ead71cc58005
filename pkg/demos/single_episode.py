"""
One episode on the default corner-patch world
=============================================

"""

# a seeded world: 10 robots on a 20 x 20 grid, tasks in one random corner
import numpy as np
from dyncoal import make_policy, preset, run_episode
from dyncoal.world import ROBOT, TASK, WALL, init_episode

cfg = preset("nonhomogeneous")
state = init_episode(cfg, seed=7)

# draw the grid: '#' wall, 'R' robot, digits are task levels
glyph = np.full(state.occupancy.shape, ".", dtype="<U1")
glyph[state.occupancy == WALL] = "#"
glyph[state.occupancy == ROBOT] = "R"
for loc, task in state.tasks.items():
    glyph[loc.y, loc.x] = str(task.level)
print("\n".join("".join(row) for row in glyph))

# run the greedy coalition heuristic for the full horizon
result = run_episode(cfg, make_policy("greedy"), seed=7, keep_trace=True)
print(f"episodic reward {result.reward:g} over {result.steps} steps")
print(f"mean steps between target changes {result.revision_interval:.2f}")

# per-step reward, as recorded in the trace
rewards = np.array([rec.reward for rec in result.trace])
print("steps with a completion:", np.flatnonzero(rewards).tolist())
