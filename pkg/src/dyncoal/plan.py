"""A* planning on the 8-connected grid and the per-step motion controller."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .observe import build_intention_map
from .world import EMPTY, Position, WorldState

log = logging.getLogger(__name__)

_OFFSETS = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


class NoPath(Exception):
    """No cell satisfying the goal condition is reachable."""


@dataclass(frozen=True)
class PlanQuery:
    start: Position
    goal: Position
    blocked: np.ndarray  # bool [y, x]
    # stop on a cell next to the goal instead of on it; None infers it from
    # whether the goal cell itself is blocked (e.g. holds a task)
    to_adjacent: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "start", Position(*self.start))
        object.__setattr__(self, "goal", Position(*self.goal))

    @classmethod
    def from_cells(cls, width: int, start, goal, blocked_cells, to_adjacent=None) -> PlanQuery:
        grid = np.zeros((width, width), dtype=bool)
        for x, y in blocked_cells:
            grid[y, x] = True
        return cls(Position(*start), Position(*goal), grid, to_adjacent)

    @property
    def adjacent_goal(self) -> bool:
        if self.to_adjacent is not None:
            return self.to_adjacent
        return bool(self.blocked[self.goal.y, self.goal.x])


@dataclass
class Path:
    cells: list[Position]

    @property
    def cost(self) -> int:
        return len(self.cells) - 1

    def __len__(self) -> int:
        return len(self.cells)


def astar(query: PlanQuery, expansion_log: list[Position] | None = None) -> Path:
    """Minimum-step path under unit-cost 8-connected moves.

    Uses the Chebyshev heuristic (minus one when stopping next to the goal).
    Open-list ties break on lower f, then lower h, then row-major cell order.
    Raises NoPath when the goal condition is unreachable.
    """
    H, W = query.blocked.shape
    # a blocked border frees the search loop from bounds checks
    padded = np.ones((H + 2, W + 2), dtype=bool)
    padded[1:-1, 1:-1] = query.blocked
    s, g = Position(*query.start), Position(*query.goal)
    log = [] if expansion_log is not None else None
    path = _astar(padded.ravel().tolist(), W + 2, Position(s.x + 1, s.y + 1),
                  Position(g.x + 1, g.y + 1), query.adjacent_goal, log)
    if log is not None:
        expansion_log.extend(Position(x - 1, y - 1) for x, y in log)
    return Path([Position(x - 1, y - 1) for x, y in path.cells])


def _astar(blocked, W, start, goal, adjacent, expansion_log=None) -> Path:
    """A* on a flat row-major grid of width W whose outer ring is blocked."""
    gx, gy = goal
    sx, sy = start
    if adjacent:
        d = max(abs(sx - gx), abs(sy - gy))
        if d == 1:
            return Path([Position(sx, sy)])
        gi = gy * W + gx
        # cheap reject: every neighbour of the goal is blocked
        if all(blocked[gi + o] for o in (-W - 1, -W, -W + 1, -1, 1, W - 1, W, W + 1)):
            raise NoPath(f"{goal} has no free neighbour")
    elif (sx, sy) == (gx, gy):
        return Path([Position(sx, sy)])

    hoff = 1 if adjacent else 0
    nbrs = _neighbour_table(W)
    goal_idx = gy * W + gx
    start_idx = sy * W + sx
    g = {start_idx: 0}
    parent = {start_idx: -1}
    closed = bytearray(len(blocked))
    h0 = max(max(abs(sx - gx), abs(sy - gy)) - hoff, 0)
    heap = [(h0, h0, start_idx, sx, sy)]
    push, pop = heapq.heappush, heapq.heappop
    gget = g.get
    expanded = 0
    while heap:
        _, hc, idx, x, y = pop(heap)
        if closed[idx]:
            continue
        closed[idx] = 1
        expanded += 1
        if expanded == _POCKET_CHECK_AFTER and _goal_enclosed(blocked, W, start_idx, goal_idx, adjacent):
            raise NoPath(f"{goal} is enclosed")
        if expansion_log is not None:
            expansion_log.append(Position(x, y))
        if hc == 0 and (idx != goal_idx if adjacent else idx == goal_idx):
            cells = []
            while idx != -1:
                yy, xx = divmod(idx, W)
                cells.append((xx, yy))
                idx = parent[idx]
            cells.reverse()
            return Path(list(map(Position._make, cells)))
        ng = g[idx] + 1
        for off, dx, dy in nbrs:
            n = idx + off
            if blocked[n] or closed[n]:
                continue
            if ng < gget(n, 1 << 30):
                g[n] = ng
                parent[n] = idx
                nx = x + dx
                ny = y + dy
                ax = nx - gx if nx > gx else gx - nx
                ay = ny - gy if ny > gy else gy - ny
                hn = (ax if ax > ay else ay) - hoff
                if hn < 0:
                    hn = 0
                push(heap, (ng + hn, hn, n, nx, ny))
    raise NoPath(f"no path from {start} to {goal}")


@lru_cache(maxsize=None)
def _neighbour_table(W: int):
    return tuple((dy * W + dx, dx, dy) for dx, dy in _OFFSETS)


_POCKET_CHECK_AFTER = 256
_POCKET_LIMIT = 2048


def _goal_enclosed(blocked, W, start_idx, goal_idx, adjacent) -> bool:
    """True if a bounded flood from the goal side exhausts without meeting start.

    A long forward search usually means the goal sits in a small pocket
    walled off by robots; proving that from the goal side is cheap, whereas
    the forward search would flood the whole reachable grid first.
    """
    offs = (-W - 1, -W, -W + 1, -1, 1, W - 1, W, W + 1)
    if adjacent:
        frontier = [goal_idx + o for o in offs if not blocked[goal_idx + o]]
    else:
        frontier = [goal_idx]
    seen = set(frontier)
    if start_idx in seen:
        return False
    while frontier:
        nxt = []
        for c in frontier:
            for o in offs:
                n = c + o
                if n == start_idx:
                    return False
                if blocked[n] or n in seen:
                    continue
                seen.add(n)
                nxt.append(n)
        if len(seen) > _POCKET_LIMIT:
            return False
        frontier = nxt
    return True


@dataclass
class MotionController:
    """Algorithm-level motion control shared by all robots of an episode.

    Paths are cached on the robot and replanned only when the target or
    goal mode changes, or when the next cell on the cached path is blocked.
    """

    replans: int = 0
    no_path_events: list[tuple[int, int, Position]] = field(default_factory=list)
    # called with the fresh IntentionMap after every replan, if set
    intent_sink: Callable | None = None
    _blocked_cache: tuple[int, int, list] | None = field(default=None, repr=False)

    def blocked_list(self, state: WorldState) -> list:
        # occupancy only changes inside world.step, so one flattening per time step
        key = (id(state), state.time)
        if self._blocked_cache is None or self._blocked_cache[:2] != key:
            self._blocked_cache = (*key, (state.occupancy.ravel() != EMPTY).tolist())
        return self._blocked_cache[2]

    def next_position(self, state: WorldState, robot_id: int, target: Position | None) -> Position:
        robot = state.robots[robot_id]
        pos = robot.position
        if target is None:
            robot.planned_path = []
            robot.path_target = None
            return pos
        target = Position(*target)
        W = state.width
        blocked = self.blocked_list(state)
        # the robot's own cell reads as blocked but is a valid place to stop
        adjacent = target != pos and bool(blocked[target.y * W + target.x])
        path = robot.planned_path
        valid = (
            bool(path)
            and robot.path_target == target
            and robot.path_adjacent == adjacent
            and path[0] == pos
            and (len(path) == 1 or not blocked[path[1].y * W + path[1].x])
        )
        if not valid:
            self.replans += 1
            robot.path_target = target
            robot.path_adjacent = adjacent
            try:
                path = _astar(blocked, W, pos, target, adjacent).cells
            except NoPath:
                self.no_path_events.append((state.time, robot_id, target))
                log.debug("t=%d robot %d: no path to %s, holding", state.time, robot_id, target)
                path = []
            robot.planned_path = path
            if self.intent_sink is not None:
                cfg = state.config
                self.intent_sink(build_intention_map(path, cfg.alpha, cfg.intent_anchor,
                                                     robot_id, state.time))
        return path[1] if len(path) > 1 else pos


def motion_step(state: WorldState, robot_id: int, target: Position | None,
                controller: MotionController | None = None) -> Position:
    """Next cell for ``robot_id`` heading to ``target``; updates its cached path."""
    return (controller or MotionController()).next_position(state, robot_id, target)
