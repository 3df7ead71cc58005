from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyncoal.config import EnvConfig, TaskRegion
from dyncoal.plan import MotionController, NoPath, PlanQuery, astar, motion_step
from dyncoal.world import WALL, Position, from_layout, set_targets, step

from oracles import bfs_cost


def random_instance(rng, W=20, density=0.2):
    blocked = rng.random((W, W)) < density
    cells = rng.choice(W * W, size=2, replace=False)
    s = Position(int(cells[0] % W), int(cells[0] // W))
    g = Position(int(cells[1] % W), int(cells[1] // W))
    blocked[s.y, s.x] = False
    return blocked, s, g


def check_path(query, path):
    assert path.cells[0] == query.start
    for a, b in zip(path.cells, path.cells[1:]):
        assert max(abs(a.x - b.x), abs(a.y - b.y)) == 1
    for c in path.cells[1:]:
        assert not query.blocked[c.y, c.x]
    end = path.cells[-1]
    if query.adjacent_goal:
        assert end.chebyshev(query.goal) == 1
    else:
        assert end == query.goal
    h = max(query.start.chebyshev(query.goal) - (1 if query.adjacent_goal else 0), 0)
    assert h <= path.cost


def test_diagonal_to_task():
    blocked = np.zeros((20, 20), bool)
    blocked[5, 5] = True  # the task
    path = astar(PlanQuery((1, 1), (5, 5), blocked))
    assert path.cost == 3 and path.cells[-1] == (4, 4)


def test_start_adjacent():
    blocked = np.zeros((20, 20), bool)
    blocked[5, 5] = True
    assert astar(PlanQuery((4, 5), (5, 5), blocked)).cells == [(4, 5)]


def test_start_is_goal():
    blocked = np.zeros((6, 6), bool)
    assert astar(PlanQuery((2, 2), (2, 2), blocked)).cost == 0


def test_walled_ring():
    blocked = np.zeros((20, 20), bool)
    blocked[8:13, 8:13] = True
    blocked[9:12, 9:12] = False  # hollow ring around (10, 10)
    blocked[10, 10] = True  # the task in the middle
    q = PlanQuery((1, 1), (10, 10), blocked)
    with pytest.raises(NoPath):
        astar(q)
    assert bfs_cost(blocked.tolist(), (1, 1), (10, 10), True) is None


def test_explicit_adjacency_flag():
    blocked = np.zeros((8, 8), bool)
    q = PlanQuery((1, 1), (5, 1), blocked, to_adjacent=True)
    assert astar(q).cost == 3


def test_expansion_log_starts_at_start():
    blocked = np.zeros((10, 10), bool)
    log = []
    astar(PlanQuery((1, 1), (8, 8), blocked), log)
    assert log[0] == (1, 1) and len(log) >= 8


def test_deterministic_tie_break():
    blocked = np.zeros((10, 10), bool)
    paths = {tuple(astar(PlanQuery((1, 1), (6, 3), blocked)).cells) for _ in range(5)}
    assert len(paths) == 1


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 0.45), st.booleans())
@settings(max_examples=300, deadline=None)
def test_cost_matches_bfs(seed, density, adjacent):
    rng = np.random.default_rng(seed)
    blocked, s, g = random_instance(rng, 20, density)
    if adjacent:
        blocked[g.y, g.x] = True
    q = PlanQuery(s, g, blocked)
    expected = bfs_cost(blocked.tolist(), s, g, q.adjacent_goal)
    try:
        path = astar(q)
    except NoPath:
        assert expected is None
        return
    assert path.cost == expected
    check_path(q, path)


@pytest.mark.parametrize("seed", range(40))
def test_large_grids_with_pockets(seed):
    # bigger grids make the enclosed-goal shortcut fire
    rng = np.random.default_rng(1000 + seed)
    blocked, s, g = random_instance(rng, 60, 0.3 + 0.1 * (seed % 3))
    blocked[g.y, g.x] = True
    q = PlanQuery(s, g, blocked)
    expected = bfs_cost(blocked.tolist(), s, g, True)
    try:
        assert astar(q).cost == expected
    except NoPath:
        assert expected is None


def cfg(W=12, n=2):
    return EnvConfig(width=W, n_robots=n, region=TaskRegion("homogeneous"), task_setting=(0, 0, 0))


class TestMotion:
    def test_no_replan_when_path_valid(self):
        s = from_layout(cfg(n=1), [(1, 1)], [((8, 8), 1)])
        mc = MotionController()
        target = Position(8, 8)
        for _ in range(6):
            nxt = mc.next_position(s, 0, target)
            set_targets(s, [target])
            step(s, [nxt])
        assert mc.replans == 1
        assert s.robots[0].position.chebyshev(target) == 1

    def test_one_replan_when_next_cell_taken(self):
        s = from_layout(cfg(), [(1, 1), (4, 1)], [((8, 8), 1)])
        mc = MotionController()
        target = Position(8, 8)
        mc.next_position(s, 0, target)
        assert mc.replans == 1
        nxt = s.robots[0].planned_path[1]
        # robot 1 steps into robot 0's next cell
        step(s, [s.robots[0].position, s.robots[1].position])
        s.occupancy[s.robots[1].position.y, s.robots[1].position.x] = 0
        s.robots[1].position = nxt
        s.occupancy[nxt.y, nxt.x] = 2
        mc.next_position(s, 0, target)
        assert mc.replans == 2
        mc.next_position(s, 0, target)
        assert mc.replans == 2

    def test_retarget_replans(self):
        s = from_layout(cfg(n=1), [(1, 1)], [((8, 8), 1), ((1, 8), 1)])
        mc = MotionController()
        mc.next_position(s, 0, Position(8, 8))
        mc.next_position(s, 0, Position(1, 8))
        assert mc.replans == 2

    def test_hold_on_none_and_no_path(self):
        s = from_layout(cfg(n=1), [(1, 1)], [((8, 8), 1)])
        for x in range(7, 10):
            for y in range(7, 10):
                if (x, y) != (8, 8):
                    s.occupancy[y, x] = WALL
        mc = MotionController()
        assert mc.next_position(s, 0, None) == (1, 1)
        assert mc.next_position(s, 0, Position(8, 8)) == (1, 1)
        assert mc.no_path_events == [(0, 0, Position(8, 8))]

    def test_intention_maps_emitted_on_replan(self):
        s = from_layout(cfg(n=1), [(1, 1)], [((8, 8), 1)])
        maps = []
        mc = MotionController(intent_sink=maps.append)
        mc.next_position(s, 0, Position(8, 8))
        mc.next_position(s, 0, Position(8, 8))
        assert len(maps) == 1
        assert maps[0].owner == 0 and maps[0].weights[-1] == 1.0
        assert maps[0].cells == s.robots[0].planned_path

    def test_motion_step_wrapper(self):
        s = from_layout(cfg(n=1), [(1, 1)], [((5, 5), 1)])
        assert motion_step(s, 0, (5, 5)) == (2, 2)

    def test_target_own_cell_stays(self):
        s = from_layout(cfg(n=1), [(3, 3)])
        assert motion_step(s, 0, (3, 3)) == (3, 3)

    @staticmethod
    def _corridor(rows):
        W = 12
        s = from_layout(cfg(W), [(2, 2), (9, 2)], [((1, 2), 1), ((10, 2), 1)])
        for y in range(1, W - 1):
            for x in range(1, W - 1):
                if y not in rows:
                    s.occupancy[y, x] = WALL
        return s

    @staticmethod
    def _drive(s, steps=100):
        mc = MotionController()
        targets = [Position(10, 2), Position(1, 2)]
        history, done = [], []
        for _ in range(steps):
            live = [t if t in s.tasks else None for t in targets]
            moves = [mc.next_position(s, i, live[i]) for i in range(2)]
            _, _, completed = step(s, moves, live)
            done += completed
            history.append(tuple(r.position for r in s.robots))
        return mc, history, done

    def test_single_lane_head_on_both_hold(self):
        # with the other robot treated as a static blocker neither finds a path
        s = self._corridor({2})
        mc, history, done = self._drive(s)
        assert set(history) == {((2, 2), (9, 2))} and not done
        assert mc.no_path_events

    def test_two_lanes_head_on_pass(self):
        s = self._corridor({2, 3})
        mc, history, done = self._drive(s)
        assert sorted(t.location for t in done) == [(1, 2), (10, 2)]
        assert len(set(history[-20:])) == 1  # settled, not oscillating
