"""
Comparing the built-in baselines
================================

"""

# a reduced evaluation: 1 seed x 24 episodes per policy
from dyncoal import ExperimentPlan, preset, run_plan

env = preset("nonhomogeneous")
for name in ("random", "greedy", "pcfa"):
    m = run_plan(ExperimentPlan(env, name, seeds=(0,), episodes_per_seed=24))
    print(f"{name:7s} mean {m.mean:7.2f}  95% CI [{m.ci_low:7.2f}, {m.ci_high:7.2f}]"
          f"  revision interval {m.mean_revision_interval:5.2f}")

# the full protocol is 5 seeds x 96 episodes: ExperimentPlan(env, name)
