"""Grid-world simulator and baselines for multi-robot dynamic coalition formation."""

from .config import PRESETS, TASK_SETTINGS, EnvConfig, SpawnModel, TaskRegion, load_config, preset
from .episode import EpisodeResult, run_episode
from .harness import ExperimentPlan, MetricsRecord, run_plan
from .observe import Observation, build_intention_map, render_all, render_observation
from .plan import NoPath, PlanQuery, astar
from .policies import make_policy
from .world import Position, Task, WorldState, init_episode, step

__version__ = "0.1.0"

__all__ = [
    "PRESETS", "TASK_SETTINGS", "EnvConfig", "SpawnModel", "TaskRegion", "load_config", "preset",
    "EpisodeResult", "run_episode", "ExperimentPlan", "MetricsRecord", "run_plan",
    "Observation", "build_intention_map", "render_all", "render_observation",
    "NoPath", "PlanQuery", "astar", "make_policy", "Position", "Task", "WorldState",
    "init_episode", "step",
]
