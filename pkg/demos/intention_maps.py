"""
Intention maps and the local observation
========================================

"""

# a planned path carries geometrically decaying weights, largest at the goal
from dyncoal import EnvConfig, build_intention_map
from dyncoal.config import TaskRegion
from dyncoal.observe import render_observation
from dyncoal.plan import motion_step
from dyncoal.world import from_layout

m = build_intention_map([(2, 2), (3, 3), (4, 4), (5, 5)])
print("weights robot -> goal:", [round(float(w), 4) for w in m.weights])

# two robots and a level-2 task; robot 1 plans toward the task
cfg = EnvConfig(width=16, n_robots=2, region=TaskRegion("homogeneous"), task_setting=(0, 0, 0))
state = from_layout(cfg, [(3, 8), (11, 8)], [((7, 8), 2)])
motion_step(state, 1, (7, 8))

# robot 0 sees the task in its level-2 channel and robot 1's path in the intent channel
obs = render_observation(state, 0)
print("channels:", obs.channels.shape, "(robot, levels 1..3, obstacle, intent)")
print("task cells in view:", int(obs.task.sum()))
print("robot 1 path:", [tuple(p) for p in state.robots[1].planned_path])
print("intent weights along it:", [round(float(obs.intent[obs.to_window(p)]), 4)
                                   for p in state.robots[1].planned_path])

# with a task in view only task cells are legal actions
print("legal cells:", [tuple(obs.cell_of_index(i)) for i in obs.mask.ravel().nonzero()[0]])
