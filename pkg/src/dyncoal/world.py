"""Grid world state, synchronous step dynamics, task spawning and completion.

Arrays are indexed ``[y, x]`` (row-major); positions are ``Position(x, y)``.
The outermost ring of cells is wall.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .config import EnvConfig

log = logging.getLogger(__name__)

EMPTY, WALL, ROBOT, TASK = 0, 1, 2, 3


class InfeasiblePlacement(ValueError):
    """More entities were requested than there are free cells."""


class IllegalMove(ValueError):
    """A proposed move is not the current cell or an 8-neighbour of it."""


class NoFreeCell(RuntimeError):
    """Instant respawn found the task region saturated."""


class Position(NamedTuple):
    x: int
    y: int

    def chebyshev(self, other: tuple[int, int]) -> int:
        return max(abs(self.x - other[0]), abs(self.y - other[1]))


def chebyshev(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


@dataclass(frozen=True)
class Task:
    id: int
    location: Position
    level: int
    spawn_time: int

    def to_dict(self) -> dict:
        return {"id": self.id, "x": self.location.x, "y": self.location.y,
                "level": self.level, "spawn_time": self.spawn_time}


@dataclass
class RobotState:
    id: int
    position: Position
    assigned_target: Position | None = None
    planned_path: list[Position] = field(default_factory=list)
    # target the cached path was planned for, and whether it stops next to it
    path_target: Position | None = None
    path_adjacent: bool = False
    revision_log: list[tuple[int, Position | None, Position | None]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "position": list(self.position),
            "assigned_target": None if self.assigned_target is None else list(self.assigned_target),
            "planned_path": [list(p) for p in self.planned_path],
            "revision_log": [
                [t, None if a is None else list(a), None if b is None else list(b)]
                for t, a, b in self.revision_log
            ],
        }


@dataclass
class WorldState:
    config: EnvConfig
    robots: list[RobotState]
    tasks: dict[Position, Task]
    occupancy: np.ndarray  # int8 codes EMPTY/WALL/ROBOT/TASK
    task_level: np.ndarray  # int8, 0 where no task
    region_mask: np.ndarray  # bool, cells where tasks may appear
    rng: np.random.Generator
    time: int = 0
    quadrant: int | None = None
    next_task_id: int = 0
    pending_respawns: list[int] = field(default_factory=list)  # levels awaiting a free cell
    last_spawns: list[Task] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.config.width

    @property
    def positions(self) -> np.ndarray:
        return np.array([r.position for r in self.robots], dtype=np.int64).reshape(-1, 2)

    def is_task(self, p: tuple[int, int]) -> bool:
        return self.occupancy[p[1], p[0]] == TASK

    def in_bounds(self, p: tuple[int, int]) -> bool:
        return 0 <= p[0] < self.width and 0 <= p[1] < self.width

    def check_invariants(self) -> None:
        """Raise AssertionError if the occupancy bookkeeping is inconsistent."""
        W = self.width
        seen: set[Position] = set()
        for r in self.robots:
            assert r.position not in seen, f"two robots share {r.position}"
            seen.add(r.position)
            assert self.occupancy[r.position.y, r.position.x] == ROBOT
            if r.planned_path:
                assert r.planned_path[0] == r.position
        for loc, t in self.tasks.items():
            assert loc == t.location and loc not in seen, f"task overlaps robot at {loc}"
            assert self.occupancy[loc.y, loc.x] == TASK
            assert self.task_level[loc.y, loc.x] == t.level
            assert t.spawn_time <= self.time
        assert (self.occupancy == ROBOT).sum() == len(self.robots)
        assert (self.occupancy == TASK).sum() == len(self.tasks)
        assert (self.occupancy[0, :] == WALL).all() and (self.occupancy[W - 1, :] == WALL).all()
        assert (self.occupancy[:, 0] == WALL).all() and (self.occupancy[:, W - 1] == WALL).all()

    def to_dict(self) -> dict:
        tasks = sorted(self.tasks.values(), key=lambda t: t.id)
        return {
            "config": self.config.to_dict(),
            "time": self.time,
            "quadrant": self.quadrant,
            "next_task_id": self.next_task_id,
            "robots": [r.to_dict() for r in self.robots],
            "tasks": [t.to_dict() for t in tasks],
            "pending_respawns": list(self.pending_respawns),
            "rng": self.rng.bit_generator.state,
        }


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _region_mask(W: int, kind: str, quadrant: int | None) -> np.ndarray:
    mask = np.zeros((W, W), dtype=bool)
    mask[1:W - 1, 1:W - 1] = True
    if kind == "corner":
        mid = W // 2
        rows = slice(0, mid) if quadrant in (0, 1) else slice(mid, W)
        cols = slice(0, mid) if quadrant in (0, 2) else slice(mid, W)
        quad = np.zeros_like(mask)
        quad[rows, cols] = True
        mask &= quad
    return mask


def init_episode(config: EnvConfig, seed=None) -> WorldState:
    """Build the initial state: walls, robots and the initial task set.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``; it defaults to
    ``config.seed``. The same (config, seed) always yields the same state.
    """
    config.validate()
    rng = make_rng(config.seed if seed is None else seed)
    W = config.width
    occ = np.zeros((W, W), dtype=np.int8)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = WALL

    quadrant = int(rng.integers(4)) if config.region.kind == "corner" else None
    region = _region_mask(W, config.region.kind, quadrant)

    interior = np.flatnonzero(occ.ravel() == EMPTY)
    if config.n_robots > interior.size:
        raise InfeasiblePlacement(
            f"{config.n_robots} robots do not fit in {interior.size} interior cells")
    robot_cells = rng.choice(interior, size=config.n_robots, replace=False)
    robots = []
    for i, c in enumerate(robot_cells):
        y, x = divmod(int(c), W)
        occ[y, x] = ROBOT
        robots.append(RobotState(i, Position(x, y)))

    levels = [lvl for lvl, n in enumerate(config.task_counts, start=1) for _ in range(n)]
    free = np.flatnonzero(region.ravel() & (occ.ravel() == EMPTY))
    if len(levels) > free.size:
        raise InfeasiblePlacement(
            f"{len(levels)} tasks do not fit in {free.size} free task-region cells")
    task_cells = rng.choice(free, size=len(levels), replace=False)
    state = WorldState(
        config=config, robots=robots, tasks={}, occupancy=occ,
        task_level=np.zeros((W, W), dtype=np.int8), region_mask=region,
        rng=rng, quadrant=quadrant,
    )
    for lvl, c in zip(levels, task_cells):
        y, x = divmod(int(c), W)
        _add_task(state, Position(x, y), lvl)
    return state


def from_layout(config: EnvConfig, robots: Sequence[tuple[int, int]],
                tasks: Sequence[tuple[tuple[int, int], int]] = (), seed=0,
                quadrant: int | None = None) -> WorldState:
    """Hand-placed state: robot i at ``robots[i]``, tasks as (cell, level).

    ``config.n_robots`` and the task setting are ignored; the region uses
    ``quadrant`` for corner patches (default 0).
    """
    W = config.width
    occ = np.zeros((W, W), dtype=np.int8)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = WALL
    if config.region.kind == "corner" and quadrant is None:
        quadrant = 0
    state = WorldState(
        config=config, robots=[], tasks={}, occupancy=occ,
        task_level=np.zeros((W, W), dtype=np.int8),
        region_mask=_region_mask(W, config.region.kind, quadrant),
        rng=make_rng(seed), quadrant=quadrant,
    )
    for i, p in enumerate(robots):
        p = Position(*p)
        if occ[p.y, p.x] != EMPTY:
            raise InfeasiblePlacement(f"robot {i} placed on an occupied cell {p}")
        occ[p.y, p.x] = ROBOT
        state.robots.append(RobotState(i, p))
    for loc, level in tasks:
        loc = Position(*loc)
        if occ[loc.y, loc.x] != EMPTY:
            raise InfeasiblePlacement(f"task placed on an occupied cell {loc}")
        _add_task(state, loc, level)
    return state


def _add_task(state: WorldState, loc: Position, level: int) -> Task:
    task = Task(state.next_task_id, loc, int(level), state.time)
    state.next_task_id += 1
    state.tasks[loc] = task
    state.occupancy[loc.y, loc.x] = TASK
    state.task_level[loc.y, loc.x] = level
    return task


def _remove_task(state: WorldState, task: Task) -> None:
    loc = task.location
    del state.tasks[loc]
    state.occupancy[loc.y, loc.x] = EMPTY
    state.task_level[loc.y, loc.x] = 0


def set_targets(state: WorldState, targets: Sequence[Position | None]) -> None:
    """Record each robot's current assignment, logging every change."""
    for robot, tgt in zip(state.robots, targets):
        if tgt is not None and type(tgt) is not Position:
            tgt = Position(*tgt)
        if tgt != robot.assigned_target:
            robot.revision_log.append((state.time, robot.assigned_target, tgt))
            robot.assigned_target = tgt


def step(state: WorldState, moves: Sequence[tuple[int, int]],
         targets: Sequence[Position | None] | None = None):
    """Advance the world by one time step, in place.

    Moves are applied in ascending robot id; a move into a cell that is
    occupied at that moment (by a robot, task or wall) is cancelled. Then
    tasks are executed, the spawn model is applied and time advances.

    Returns ``(state, reward, completions)``; spawned tasks are left in
    ``state.last_spawns``.
    """
    robots = state.robots
    if len(moves) != len(robots):
        raise ValueError(f"expected {len(robots)} moves, got {len(moves)}")
    moves = [m if type(m) is Position else Position(int(m[0]), int(m[1])) for m in moves]
    W = state.width
    for robot, m in zip(robots, moves):
        px, py = robot.position
        if abs(m.x - px) > 1 or abs(m.y - py) > 1 or not (0 <= m.x < W and 0 <= m.y < W):
            raise IllegalMove(f"robot {robot.id}: {robot.position} -> {m}")
    if targets is not None:
        set_targets(state, targets)

    occ = state.occupancy
    for robot, m in zip(robots, moves):
        p = robot.position
        if m == p or occ[m.y, m.x] != EMPTY:
            continue
        occ[p.y, p.x] = EMPTY
        occ[m.y, m.x] = ROBOT
        robot.position = m
        path = robot.planned_path
        if len(path) > 1 and path[1] == m:
            del path[0]
        else:
            robot.planned_path = []

    completions = execute_tasks(state)
    state.last_spawns = apply_spawn(state, completions)
    state.time += 1
    reward = float(sum(t.level ** 2 for t in completions))
    return state, reward, completions


def execute_tasks(state: WorldState) -> list[Task]:
    """Remove and return every task whose committed-adjacent robot count
    reaches its level. A robot counts only toward the task it is assigned to."""
    counts: dict[Position, int] = {}
    tasks = state.tasks
    for robot in state.robots:
        tgt = robot.assigned_target
        if tgt is not None and tgt in tasks:
            p = robot.position
            if max(abs(p.x - tgt.x), abs(p.y - tgt.y)) == 1:
                counts[tgt] = counts.get(tgt, 0) + 1
    done = sorted((tasks[loc] for loc, n in counts.items() if n >= tasks[loc].level),
                  key=lambda t: t.id)
    for task in done:
        assert counts[task.location] >= task.level
        _remove_task(state, task)
    return done


def apply_spawn(state: WorldState, completions: Sequence[Task]) -> list[Task]:
    """Apply the spawn model after completions were removed; returns new tasks."""
    spawn = state.config.spawn
    rng = state.rng
    W = state.width
    new: list[Task] = []
    if spawn.kind == "bernoulli":
        if spawn.p <= 0.0:
            return new
        free = np.flatnonzero(state.region_mask.ravel() & (state.occupancy.ravel() == EMPTY))
        draws = rng.random(free.size)
        cells = free[draws < spawn.p]
        levels = rng.integers(1, state.config.l_max + 1, size=cells.size)
        for c, lvl in zip(cells, levels):
            y, x = divmod(int(c), W)
            new.append(_add_task(state, Position(x, y), int(lvl)))
        return new

    # instant respawn: same level, relocated, never onto a cell vacated this step
    wanted = state.pending_respawns + [t.level for t in completions]
    state.pending_respawns = []
    if not wanted:
        return new
    avail = state.region_mask & (state.occupancy == EMPTY)
    for t in completions:
        avail[t.location.y, t.location.x] = False
    free = np.flatnonzero(avail.ravel())
    for i, lvl in enumerate(wanted):
        if free.size == 0:
            state.pending_respawns.extend(wanted[i:])
            log.info("t=%d: %s", state.time, NoFreeCell(
                f"{len(wanted) - i} respawn(s) deferred, task region saturated"))
            break
        k = int(rng.integers(free.size))
        c = int(free[k])
        free = np.delete(free, k)
        y, x = divmod(c, W)
        new.append(_add_task(state, Position(x, y), lvl))
    return new
