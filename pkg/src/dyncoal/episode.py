"""Episode loop: observe, decide, plan, step; plus trace recording."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import EnvConfig
from .observe import render_all
from .plan import MotionController
from .policies import Policy
from .world import Position, Task, WorldState, init_episode, step


def episode_seeds(seed: int, episode: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Independent (world, policy) seed sequences for one episode."""
    world, policy = np.random.SeedSequence(seed, spawn_key=(episode,)).spawn(2)
    return world, policy


@dataclass
class StepRecord:
    t: int
    targets: list[Position | None]
    moves: list[Position]
    reward: float
    completions: list[Task]
    spawns: list[Task]

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "joint_action": [
                {"target": None if tg is None else [tg[0], tg[1]], "move": [m[0], m[1]]}
                for tg, m in zip(self.targets, self.moves)
            ],
            "reward": self.reward,
            "completions": [c.to_dict() for c in self.completions],
            "spawns": [s.to_dict() for s in self.spawns],
        }


@dataclass
class EpisodeResult:
    seed: int
    episode: int
    reward: float
    revision_interval: float
    steps: int
    valid: bool = True
    error: str | None = None
    wall_seconds: float = field(default=0.0, compare=False)
    replans: int = field(default=0, compare=False)
    trace: list[StepRecord] | None = field(default=None, compare=False, repr=False)
    initial_tasks: list[Task] = field(default_factory=list, compare=False, repr=False)

    def record(self) -> dict:
        """Deterministic per-episode record (no wall-clock fields)."""
        return {
            "seed": self.seed,
            "episode": self.episode,
            "reward": self.reward,
            "revision_interval": None if np.isnan(self.revision_interval) else self.revision_interval,
            "steps": self.steps,
            "valid": self.valid,
            "error": self.error,
        }

    def trace_lines(self) -> list[str]:
        return [json.dumps(s.to_dict(), sort_keys=True) for s in (self.trace or [])]


def revision_interval(state: WorldState) -> float:
    """Mean steps between successive target changes.

    Averaged per robot over robots with at least two changes; NaN when no
    robot changed its target twice.
    """
    per_robot = []
    for r in state.robots:
        times = [t for t, _, _ in r.revision_log]
        if len(times) >= 2:
            per_robot.append(float(np.mean(np.diff(times))))
    return float(np.mean(per_robot)) if per_robot else float("nan")


def run_episode(config: EnvConfig, policy: Policy, seed: int, episode: int = 0, *,
                keep_trace: bool = False,
                on_step: Callable[[WorldState, StepRecord], None] | None = None) -> EpisodeResult:
    """Run one episode of ``config.horizon`` steps.

    Exceptions raised by the policy abort the episode and mark it invalid.
    """
    world_seed, policy_seed = episode_seeds(seed, episode)
    state = init_episode(config, world_seed)
    initial = sorted(state.tasks.values(), key=lambda t: t.id)
    policy.reset(state, np.random.Generator(np.random.PCG64(policy_seed)))
    motion = MotionController()
    trace: list[StepRecord] = []
    total = 0.0
    valid, error = True, None
    t0 = time.perf_counter()
    n_robots = len(state.robots)
    for _ in range(config.horizon):
        try:
            obs = render_all(state) if policy.needs_observations else None
            decisions = policy.act(state, obs)
        except Exception as exc:  # noqa: BLE001 - recorded, episode marked invalid
            valid, error = False, f"{type(exc).__name__}: {exc}"
            break
        targets = [d.target for d in decisions]
        moves = [motion.next_position(state, i, targets[i]) for i in range(n_robots)]
        t = state.time
        _, reward, completions = step(state, moves, targets)
        total += reward
        rec = StepRecord(t, targets, moves, reward, completions, list(state.last_spawns))
        if keep_trace:
            trace.append(rec)
        if on_step is not None:
            on_step(state, rec)
    wall = time.perf_counter() - t0
    return EpisodeResult(
        seed=seed, episode=episode, reward=total,
        revision_interval=revision_interval(state), steps=state.time,
        valid=valid, error=error, wall_seconds=wall, replans=motion.replans,
        trace=trace if keep_trace else None, initial_tasks=initial,
    )
