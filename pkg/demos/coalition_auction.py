"""
Coalitions from the market baseline
===================================

"""

# three robots, one level-2 task: the two best bidders form the coalition
import json

from dyncoal import EnvConfig
from dyncoal.config import TaskRegion
from dyncoal.pcfa import ledger_lines, pcfa_round
from dyncoal.world import from_layout

cfg = EnvConfig(width=20, n_robots=3, region=TaskRegion("homogeneous"), task_setting=(0, 0, 0))
state = from_layout(cfg, [(8, 10), (13, 10), (10, 7)], [((10, 10), 2)])
ledgers, targets = pcfa_round(state)
for line in ledger_lines(ledgers):
    print(json.loads(line))
print("targets:", targets)  # None: outbid this step, the robot holds

# split the team so two groups cannot talk: each forms its own coalition
cfg = EnvConfig(width=20, n_robots=4, view_range=5, comm_range=5,
                region=TaskRegion("homogeneous"), task_setting=(0, 0, 0))
state = from_layout(cfg, [(5, 10), (5, 11), (15, 10), (15, 11)], [((10, 10), 2)])
ledgers, _ = pcfa_round(state)
for led in ledgers:
    print("component", led.members, "commits", led.committed)
